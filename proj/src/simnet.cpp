#include "peridot/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <tuple>

#include "peridot/construction.hpp"
#include "peridot/errors.hpp"

namespace peridot {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string device_name(std::size_t index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "dev-%03zu", index);
    return buf;
}

constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

} // namespace

std::string MacKey::hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(32);
    for (std::uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

MacKey MacKey::from_hex(const std::string& hex) {
    if (hex.size() != 32) {
        throw ValidationError("key hex must be 32 characters");
    }
    auto nibble = [](char c) -> std::uint8_t {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw ValidationError("invalid hex digit in key");
    };
    MacKey key;
    for (std::size_t i = 0; i < 16; ++i) {
        key.bytes[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    }
    return key;
}

MacKey MacKey::derive(std::uint64_t seed, std::uint64_t device_index) {
    std::uint64_t state = seed ^ (device_index * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL);
    MacKey key;
    for (std::size_t i = 0; i < 2; ++i) {
        const std::uint64_t word = splitmix64(state);
        for (std::size_t b = 0; b < 8; ++b) {
            key.bytes[8 * i + b] = static_cast<std::uint8_t>(word >> (8 * b));
        }
    }
    return key;
}

std::uint64_t compute_mac(const MacKey& key, Elem cn,
                          const std::vector<std::uint8_t>& payload, unsigned t_bits) {
    if (t_bits < 4 || t_bits > 64) {
        throw DomainError("t_bits must be in [4, 64]");
    }
    std::uint64_t state = 0x5bd1e995cbf29ce4ULL;
    auto absorb = [&state](std::uint64_t word) {
        state ^= word;
        splitmix64(state);
        state = (state ^ (state >> 29)) * 0xff51afd7ed558ccdULL;
    };
    std::uint64_t k0 = 0, k1 = 0;
    for (std::size_t b = 0; b < 8; ++b) {
        k0 |= static_cast<std::uint64_t>(key.bytes[b]) << (8 * b);
        k1 |= static_cast<std::uint64_t>(key.bytes[8 + b]) << (8 * b);
    }
    absorb(k0);
    absorb(k1);
    absorb(cn);
    absorb(payload.size());
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < payload.size(); ++i) {
        word |= static_cast<std::uint64_t>(payload[i]) << (8 * (i % 8));
        if (i % 8 == 7) {
            absorb(word);
            word = 0;
        }
    }
    if (payload.size() % 8 != 0) {
        absorb(word);
    }
    absorb(k0); // close with the key so truncation can't be extended
    std::uint64_t tag = state;
    std::uint64_t dummy = tag;
    tag = splitmix64(dummy);
    return t_bits == 64 ? tag : (tag & ((std::uint64_t{1} << t_bits) - 1));
}

ChannelConfig::ChannelConfig(double eps) : epsilon(eps) {
    if (!(eps >= 0.0) || !(eps < 1.0)) {
        throw DomainError("erasure probability must be in [0, 1)");
    }
}

std::vector<std::uint32_t> RegionModel::neighbors(std::uint32_t region) const {
    std::vector<std::uint32_t> out;
    for (auto [a, b] : adjacency) {
        if (a == region) out.push_back(b);
        if (b == region) out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

PacketEvent next_packet(TransmitterState& state, std::vector<std::uint8_t> payload,
                        std::uint64_t ts, unsigned t_bits) {
    const Elem next = (state.current_cn + state.perm.delta) % state.perm.q;
    state.current_cn = next;
    PacketEvent packet;
    packet.ts = ts;
    packet.region = state.region;
    packet.cn = next;
    packet.payload = std::move(payload);
    packet.mac = compute_mac(state.key, next, packet.payload, t_bits);
    return packet;
}

bool transmit_erased(const ChannelConfig& channel, std::mt19937_64& rng) {
    if (channel.epsilon <= 0.0) {
        return false;
    }
    return std::bernoulli_distribution(channel.epsilon)(rng);
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
    ScenarioConfig cfg;
    if (j.contains("construction")) {
        ConstructionParams params;
        j.at("construction").at("p").get_to(params.p);
        j.at("construction").at("l").get_to(params.l);
        cfg.construction = params;
        cfg.q = params.p * params.l;
    }
    if (j.contains("members")) {
        cfg.explicit_members = j.at("members").get<std::vector<Permutation>>();
        if (!cfg.explicit_members.empty()) {
            cfg.q = cfg.explicit_members.front().q();
        }
    }
    if (j.contains("q")) {
        j.at("q").get_to(cfg.q);
    }
    cfg.device_count = j.value("devices", std::size_t{0});
    cfg.epsilon = j.value("epsilon", 0.0);
    cfg.events = j.value("events", std::uint64_t{0});
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.t_bits = j.value("t_bits", 32u);
    cfg.mean_interval = j.value("mean_interval", 10.0);
    if (j.contains("regions")) {
        const auto& r = j.at("regions");
        cfg.regions.count = r.value("count", 1u);
        cfg.regions.change_prob = r.value("change_prob", 0.0);
        if (r.contains("adjacency")) {
            for (const auto& edge : r.at("adjacency")) {
                cfg.regions.adjacency.emplace_back(edge.at(0).get<std::uint32_t>(),
                                                   edge.at(1).get<std::uint32_t>());
            }
        }
    }
    if (j.contains("commissioning")) {
        for (const auto& entry : j.at("commissioning")) {
            cfg.commissioning.emplace_back(entry.at("device").get<std::size_t>(),
                                           entry.at("time").get<std::uint64_t>());
        }
    }
    if (j.contains("initial_cns")) {
        j.at("initial_cns").get_to(cfg.initial_cns);
    }
    cfg.payload_bytes = j.value("payload_bytes", std::size_t{4});
    if (j.contains("script")) {
        for (const auto& step : j.at("script")) {
            cfg.script.push_back(ScriptStep{step.at("device").get<std::size_t>(),
                                            step.value("erased", false)});
        }
    }
    return cfg;
}

namespace {

std::vector<Elem> scenario_increments(const ScenarioConfig& config) {
    std::vector<Elem> increments;
    if (config.construction.has_value()) {
        ProperSet set = construct(config.construction->p, config.construction->l);
        const std::size_t m = set.size();
        if (config.device_count > m) {
            throw ValidationError("device count exceeds the set size m = " + std::to_string(m));
        }
        for (std::size_t i = 0; i < config.device_count; ++i) {
            increments.push_back(set.increment_at(i));
        }
    } else {
        if (config.device_count > config.explicit_members.size()) {
            throw ValidationError("device count exceeds the number of supplied permutations");
        }
        for (std::size_t i = 0; i < config.device_count; ++i) {
            const auto& member = config.explicit_members[i];
            if (!member.is_increment_form()) {
                throw ValidationError("scenario permutations must be in increment form");
            }
            if (!member.is_cyclic()) {
                throw ValidationError("scenario permutation " + std::to_string(i) + " is not cyclic");
            }
            increments.push_back(member.delta());
        }
    }
    return increments;
}

} // namespace

ScenarioResult run_scenario(const ScenarioConfig& config) {
    if (config.q < 2) {
        throw ValidationError("scenario needs an alphabet (construction, members or q)");
    }
    ChannelConfig channel(config.epsilon);
    const std::vector<Elem> increments = scenario_increments(config);
    const std::size_t d = increments.size();
    if (d == 0) {
        throw ValidationError("scenario needs at least one device");
    }

    std::mt19937_64 rng(config.seed);

    ScenarioResult result;
    std::vector<TransmitterState> states(d);
    std::vector<std::uint64_t> commission_time(d, 0);
    for (auto [device, time] : config.commissioning) {
        if (device >= d) {
            throw ValidationError("commissioning entry for unknown device");
        }
        commission_time[device] = time;
    }
    for (std::size_t i = 0; i < d; ++i) {
        TransmitterState& s = states[i];
        s.device_id = device_name(i);
        s.perm = IncrementForm{config.q, increments[i]};
        s.key = MacKey::derive(config.seed, i);
        s.region = config.regions.count > 1
                       ? static_cast<std::uint32_t>(rng() % config.regions.count)
                       : 0;
        s.commissioned_at = commission_time[i];
        if (i < config.initial_cns.size()) {
            if (config.initial_cns[i] >= config.q) {
                throw ValidationError("initial CN out of range");
            }
            s.current_cn = config.initial_cns[i];
        } else {
            s.current_cn = rng() % config.q;
        }
        result.devices.push_back(DeviceInfo{s.device_id, config.q, increments[i], s.key,
                                            s.region, s.commissioned_at});
    }

    std::vector<std::uint64_t> tx_since_delivered(d, 0);
    std::vector<bool> delivered_before(d, false);

    auto record_transmission = [&](std::size_t device, std::uint64_t ts, bool erased) {
        TransmitterState& s = states[device];
        std::vector<std::uint8_t> payload(config.payload_bytes);
        for (auto& b : payload) {
            b = static_cast<std::uint8_t>(rng());
        }
        PacketEvent packet = next_packet(s, std::move(payload), ts, config.t_bits);
        ++tx_since_delivered[device];
        TruthRecord truth;
        truth.packet = packet;
        truth.device_index = device;
        truth.device_id = s.device_id;
        truth.erased = erased;
        if (!erased) {
            truth.beta = delivered_before[device] ? tx_since_delivered[device] : 0;
            tx_since_delivered[device] = 0;
            delivered_before[device] = true;
            result.trace.push_back(packet);
        }
        result.truth.push_back(std::move(truth));
    };

    if (!config.script.empty()) {
        std::uint64_t ts = 1;
        for (const ScriptStep& step : config.script) {
            if (step.device >= d) {
                throw ValidationError("script step for unknown device");
            }
            record_transmission(step.device, ts++, step.erased);
        }
        return result;
    }

    // (time, device) min-heap keeps the event order deterministic.
    using Event = std::pair<std::uint64_t, std::size_t>;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
    std::exponential_distribution<double> interval(1.0 / std::max(config.mean_interval, 1e-9));
    auto draw_gap = [&]() {
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(interval(rng))));
    };
    for (std::size_t i = 0; i < d; ++i) {
        queue.emplace(commission_time[i] + draw_gap(), i);
    }

    for (std::uint64_t n = 0; n < config.events && !queue.empty(); ++n) {
        auto [ts, device] = queue.top();
        queue.pop();
        TransmitterState& s = states[device];
        if (config.regions.count > 1 && config.regions.change_prob > 0.0 &&
            std::bernoulli_distribution(config.regions.change_prob)(rng)) {
            const auto neighbors = config.regions.neighbors(s.region);
            if (!neighbors.empty()) {
                s.region = neighbors[rng() % neighbors.size()];
            }
        }
        record_transmission(device, ts, transmit_erased(channel, rng));
        queue.emplace(ts + draw_gap(), device);
    }
    return result;
}

nlohmann::json trace_line(const PacketEvent& p) {
    return nlohmann::json{{"ts", p.ts},
                          {"region", p.region},
                          {"cn", p.cn},
                          {"mac", p.mac},
                          {"payload_b64", base64_encode(p.payload)}};
}

PacketEvent trace_line_parse(const nlohmann::json& j) {
    PacketEvent p;
    j.at("ts").get_to(p.ts);
    j.at("region").get_to(p.region);
    j.at("cn").get_to(p.cn);
    j.at("mac").get_to(p.mac);
    p.payload = base64_decode(j.at("payload_b64").get<std::string>());
    return p;
}

nlohmann::json truth_line(const TruthRecord& r) {
    nlohmann::json j = trace_line(r.packet);
    j["device_id"] = r.device_id;
    j["device_index"] = r.device_index;
    j["erased"] = r.erased;
    j["beta"] = r.beta;
    return j;
}

TruthRecord truth_line_parse(const nlohmann::json& j) {
    TruthRecord r;
    r.packet = trace_line_parse(j);
    j.at("device_id").get_to(r.device_id);
    j.at("device_index").get_to(r.device_index);
    j.at("erased").get_to(r.erased);
    j.at("beta").get_to(r.beta);
    return r;
}

nlohmann::json devices_json(const std::vector<DeviceInfo>& devices, unsigned t_bits) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& dev : devices) {
        list.push_back(nlohmann::json{{"device_id", dev.device_id},
                                      {"q", dev.q},
                                      {"delta", dev.delta},
                                      {"key_hex", dev.key.hex()},
                                      {"region", dev.region},
                                      {"commissioned_at", dev.commissioned_at}});
    }
    return nlohmann::json{{"t_bits", t_bits}, {"devices", list}};
}

std::vector<DeviceInfo> devices_json_parse(const nlohmann::json& j) {
    std::vector<DeviceInfo> out;
    for (const auto& entry : j.at("devices")) {
        DeviceInfo dev;
        entry.at("device_id").get_to(dev.device_id);
        entry.at("q").get_to(dev.q);
        entry.at("delta").get_to(dev.delta);
        dev.key = MacKey::from_hex(entry.at("key_hex").get<std::string>());
        dev.region = entry.value("region", 0u);
        dev.commissioned_at = entry.value("commissioned_at", std::uint64_t{0});
        out.push_back(std::move(dev));
    }
    return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& data) {
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < data.size(); i += 3) {
        std::uint32_t chunk = data[i] << 16;
        if (i + 1 < data.size()) chunk |= data[i + 1] << 8;
        if (i + 2 < data.size()) chunk |= data[i + 2];
        out.push_back(kB64Alphabet[(chunk >> 18) & 0x3f]);
        out.push_back(kB64Alphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < data.size() ? kB64Alphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < data.size() ? kB64Alphabet[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw ValidationError("invalid base64 input");
    };
    if (text.size() % 4 != 0) {
        throw ValidationError("base64 length must be a multiple of 4");
    }
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        for (int k = 0; k < 4; ++k) {
            v[k] = value(text[i + k]);
        }
        const std::uint32_t chunk = (v[0] << 18) | (v[1] << 12) | ((v[2] < 0 ? 0 : v[2]) << 6) |
                                    (v[3] < 0 ? 0 : v[3]);
        out.push_back((chunk >> 16) & 0xff);
        if (v[2] >= 0) out.push_back((chunk >> 8) & 0xff);
        if (v[3] >= 0) out.push_back(chunk & 0xff);
    }
    return out;
}

} // namespace peridot
