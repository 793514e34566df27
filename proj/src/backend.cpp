#include "peridot/backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "peridot/construction.hpp"
#include "peridot/errors.hpp"

namespace peridot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

} // namespace

DeviceRecord DeviceRecord::from_info(const DeviceInfo& info) {
    DeviceRecord rec;
    rec.device_id = info.device_id;
    rec.q = info.q;
    rec.delta = info.delta;
    rec.inv_delta = mod_inverse(info.delta, info.q);
    rec.key = info.key;
    rec.identified = false;
    rec.last_region = info.region;
    return rec;
}

EngineConfig EngineConfig::from_json(const nlohmann::json& j) {
    EngineConfig cfg;
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.dominance_ratio = j.value("dominance_ratio", cfg.dominance_ratio);
    cfg.delivery_ratio = j.value("delivery_ratio", cfg.delivery_ratio);
    cfg.beam_ratio = j.value("beam_ratio", cfg.beam_ratio);
    cfg.max_paths = j.value("max_paths", cfg.max_paths);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.t_bits = j.value("t_bits", cfg.t_bits);
    cfg.mac_filter = j.value("mac_filter", cfg.mac_filter);
    cfg.l = j.value("l", cfg.l);
    cfg.region_filter = j.value("region_filter", cfg.region_filter);
    if (j.contains("regions")) {
        const auto& r = j.at("regions");
        cfg.regions.count = r.value("count", 1u);
        if (r.contains("adjacency")) {
            for (const auto& edge : r.at("adjacency")) {
                cfg.regions.adjacency.emplace_back(edge.at(0).get<std::uint32_t>(),
                                                   edge.at(1).get<std::uint32_t>());
            }
        }
    }
    return cfg;
}

nlohmann::json EngineConfig::to_json() const {
    return nlohmann::json{{"epsilon", epsilon},
                          {"dominance_ratio", dominance_ratio},
                          {"delivery_ratio", delivery_ratio},
                          {"beam_ratio", beam_ratio},
                          {"max_paths", max_paths},
                          {"horizon", horizon},
                          {"t_bits", t_bits},
                          {"mac_filter", mac_filter},
                          {"l", l},
                          {"region_filter", region_filter}};
}

double transition_log_weight(std::optional<Elem> last, Elem delta, Elem inv_delta, Elem q,
                             Elem observed, double epsilon) {
    (void)delta;
    if (!last.has_value()) {
        // First observation of this device: uniform prior over Z_q.
        return -std::log(static_cast<double>(q));
    }
    const Elem diff = (observed + q - *last) % q;
    Elem beta = static_cast<Elem>((static_cast<unsigned __int128>(inv_delta) * diff) % q);
    if (beta == 0) {
        beta = q;
    }
    if (epsilon <= 0.0) {
        return beta == 1 ? 0.0 : kNegInf;
    }
    return std::log1p(-epsilon) + static_cast<double>(beta - 1) * std::log(epsilon);
}

IdentificationEngine::IdentificationEngine(std::vector<DeviceRecord> devices, EngineConfig config)
    : devices_(std::move(devices)), config_(std::move(config)) {
    for (const auto& dev : devices_) {
        if (dev.q < 2) {
            throw ValidationError("device " + dev.device_id + " has invalid alphabet");
        }
    }
}

bool IdentificationEngine::region_plausible(std::uint32_t seen, std::uint32_t packet_region) const {
    if (!config_.region_filter || seen == packet_region) {
        return true;
    }
    for (auto [a, b] : config_.regions.adjacency) {
        if ((a == seen && b == packet_region) || (b == seen && a == packet_region)) {
            return true;
        }
    }
    return false;
}

std::vector<CandidateScore> IdentificationEngine::score_candidates(const PacketEvent& packet) const {
    std::vector<CandidateScore> scores;
    for (std::size_t i = 0; i < devices_.size(); ++i) {
        const DeviceRecord& dev = devices_[i];
        if (!dev.identified) {
            continue;
        }
        CandidateScore score;
        score.device_index = i;
        score.beta = recover_beta(dev.delta, dev.q, dev.last_cn, packet.cn);
        if (!region_plausible(dev.last_region, packet.region)) {
            score.probability = 0.0;
            score.plausible = false;
        } else {
            score.probability =
                (1.0 - config_.epsilon) * std::pow(config_.epsilon, static_cast<double>(score.beta - 1));
            score.plausible = config_.l == 0 || score.beta <= config_.l;
        }
        scores.push_back(score);
    }
    std::sort(scores.begin(), scores.end(), [](const CandidateScore& a, const CandidateScore& b) {
        if (a.probability != b.probability) {
            return a.probability > b.probability;
        }
        return a.device_index < b.device_index;
    });
    return scores;
}

std::optional<Attribution> IdentificationEngine::try_fast_path(
    const PacketEvent& packet, const std::vector<CandidateScore>& scores) {
    if (scores.empty()) {
        return std::nullopt;
    }
    const CandidateScore& best = scores.front();
    if (!best.plausible || best.probability <= 0.0) {
        return std::nullopt;
    }
    if (scores.size() > 1) {
        const double runner = scores[1].probability;
        if (runner > 0.0 && best.probability < runner * config_.dominance_ratio) {
            return std::nullopt; // multiple probable candidates
        }
    }
    const DeviceRecord& dev = devices_[best.device_index];
    if (compute_mac(dev.key, packet.cn, packet.payload, config_.t_bits) != packet.mac) {
        return std::nullopt; // MAC invalid: escalate
    }
    Attribution attr;
    attr.obs_index = obs_counter_ - 1;
    attr.ts = packet.ts;
    attr.cn = packet.cn;
    attr.device_index = best.device_index;
    attr.device_id = dev.device_id;
    attr.delay_packets = 0;
    attr.resolved_by = ResolvedBy::fast_path;
    apply_delivery(best.device_index, packet);
    return attr;
}

void IdentificationEngine::apply_delivery(std::size_t device, const PacketEvent& packet) {
    DeviceRecord& dev = devices_[device];
    dev.identified = true;
    dev.last_cn = packet.cn;
    dev.last_ts = packet.ts;
    dev.last_region = packet.region;
}

std::vector<Attribution> IdentificationEngine::observe(const PacketEvent& packet) {
    ++obs_counter_;
    if (paths_.empty()) {
        const auto scores = score_candidates(packet);
        if (auto fast = try_fast_path(packet, scores)) {
            return {*fast};
        }
    }
    return hmm_observe(packet);
}

namespace {

bool path_attr_less(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

} // namespace

std::vector<Attribution> IdentificationEngine::hmm_observe(const PacketEvent& packet) {
    std::vector<Attribution> out;
    const std::size_t d = devices_.size();
    const std::size_t obs_index = obs_counter_ - 1;

    auto dropped_now = [&](const PacketEvent& p, std::size_t idx) {
        Attribution a;
        a.obs_index = idx;
        a.ts = p.ts;
        a.cn = p.cn;
        a.delay_packets = obs_index - idx;
        a.resolved_by = ResolvedBy::dropped;
        return a;
    };

    if (d == 0) {
        out.push_back(dropped_now(packet, obs_index));
        return out;
    }

    if (paths_.empty()) {
        Path root;
        root.last_cn.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            if (devices_[j].identified) {
                root.last_cn[j] = devices_[j].last_cn;
            }
        }
        paths_.push_back(std::move(root));
    }

    std::vector<bool> mac_ok(d, true);
    if (config_.mac_filter) {
        for (std::size_t j = 0; j < d; ++j) {
            mac_ok[j] = compute_mac(devices_[j].key, packet.cn, packet.payload, config_.t_bits) ==
                        packet.mac;
        }
    }

    // Extend every surviving path by all single-device explanations of the
    // observed CN, then Viterbi-merge per resulting state vector. A state
    // transition touches exactly one coordinate by construction.
    std::map<std::vector<Elem>, Path> merged;
    for (const Path& path : paths_) {
        for (std::size_t j = 0; j < d; ++j) {
            if (!mac_ok[j]) {
                continue;
            }
            const DeviceRecord& dev = devices_[j];
            // Region plausibility is checked against the database for devices
            // not yet re-attributed inside the pending window.
            if (dev.identified && path.last_cn[j].has_value() &&
                *path.last_cn[j] == dev.last_cn &&
                !region_plausible(dev.last_region, packet.region)) {
                continue;
            }
            const double logw = transition_log_weight(path.last_cn[j], dev.delta, dev.inv_delta,
                                                      dev.q, packet.cn, config_.epsilon);
            if (logw == kNegInf) {
                continue;
            }
            Path child;
            child.last_cn = path.last_cn;
            child.last_cn[j] = packet.cn;
            child.log_prob = path.log_prob + logw;
            child.attributions = path.attributions;
            child.attributions.push_back(static_cast<std::uint32_t>(j));

            std::vector<Elem> key(d);
            for (std::size_t k = 0; k < d; ++k) {
                key[k] = child.last_cn[k].has_value() ? *child.last_cn[k] : devices_[k].q;
            }
            auto it = merged.find(key);
            if (it == merged.end()) {
                merged.emplace(std::move(key), std::move(child));
            } else if (child.log_prob > it->second.log_prob ||
                       (child.log_prob == it->second.log_prob &&
                        path_attr_less(child.attributions, it->second.attributions))) {
                it->second = std::move(child);
            }
        }
    }

    if (merged.empty()) {
        // No device explains the packet (e.g. MAC matches nobody): drop it
        // rather than poison the path set.
        out.push_back(dropped_now(packet, obs_index));
        return out;
    }

    pending_.push_back(Pending{packet, obs_index});

    double best = kNegInf;
    for (const auto& [key, path] : merged) {
        best = std::max(best, path.log_prob);
    }
    const double cutoff = best - std::log(config_.beam_ratio);
    paths_.clear();
    for (auto& [key, path] : merged) {
        if (path.log_prob >= cutoff) {
            paths_.push_back(std::move(path));
        }
    }
    if (paths_.size() > config_.max_paths) {
        throw BackpressureError("HMM path count " + std::to_string(paths_.size()) +
                                " exceeds max_paths = " + std::to_string(config_.max_paths));
    }

    // Delivery: a single surviving path, or one that dominates the runner-up
    // by the configured ratio, resolves everything pending.
    double top = kNegInf, second = kNegInf;
    for (const Path& path : paths_) {
        if (path.log_prob > top) {
            second = top;
            top = path.log_prob;
        } else if (path.log_prob > second) {
            second = path.log_prob;
        }
    }
    const bool dominant =
        paths_.size() == 1 || (second == kNegInf) || (top - second >= std::log(config_.delivery_ratio));
    if (dominant) {
        auto delivered = deliver_best_path();
        out.insert(out.end(), delivered.begin(), delivered.end());
        return out;
    }

    drop_expired(out);
    return out;
}

std::vector<Attribution> IdentificationEngine::deliver_best_path() {
    const Path* best = nullptr;
    for (const Path& path : paths_) {
        if (best == nullptr || path.log_prob > best->log_prob ||
            (path.log_prob == best->log_prob && path_attr_less(path.attributions, best->attributions))) {
            best = &path;
        }
    }
    std::vector<Attribution> out;
    if (best == nullptr) {
        return out;
    }
    const std::size_t now = obs_counter_ == 0 ? 0 : obs_counter_ - 1;
    for (std::size_t i = 0; i < pending_.size(); ++i) {
        const PacketEvent& packet = pending_[i].packet;
        const std::size_t j = best->attributions[i];
        Attribution a;
        a.obs_index = pending_[i].obs_index;
        a.ts = packet.ts;
        a.cn = packet.cn;
        a.delay_packets = now - pending_[i].obs_index;
        // The MAC is the final identity check regardless of how the path was
        // scored on the way here.
        if (compute_mac(devices_[j].key, packet.cn, packet.payload, config_.t_bits) == packet.mac) {
            a.device_index = j;
            a.device_id = devices_[j].device_id;
            a.resolved_by = ResolvedBy::hmm;
            apply_delivery(j, packet);
        } else {
            a.resolved_by = ResolvedBy::dropped;
        }
        out.push_back(std::move(a));
    }
    pending_.clear();
    paths_.clear();
    return out;
}

void IdentificationEngine::drop_expired(std::vector<Attribution>& out) {
    const std::size_t now = obs_counter_ == 0 ? 0 : obs_counter_ - 1;
    while (!pending_.empty() && now - pending_.front().obs_index >= config_.horizon) {
        const Pending& stale = pending_.front();
        Attribution a;
        a.obs_index = stale.obs_index;
        a.ts = stale.packet.ts;
        a.cn = stale.packet.cn;
        a.delay_packets = now - stale.obs_index;
        a.resolved_by = ResolvedBy::dropped;
        out.push_back(std::move(a));
        pending_.erase(pending_.begin());
        for (Path& path : paths_) {
            path.attributions.erase(path.attributions.begin());
        }
        // Paths can now coincide in state and attributions; keep the best.
        std::map<std::pair<std::vector<Elem>, std::vector<std::uint32_t>>, Path> merged;
        for (Path& path : paths_) {
            std::vector<Elem> key(devices_.size());
            for (std::size_t k = 0; k < devices_.size(); ++k) {
                key[k] = path.last_cn[k].has_value() ? *path.last_cn[k] : devices_[k].q;
            }
            auto full_key = std::make_pair(std::move(key), path.attributions);
            auto it = merged.find(full_key);
            if (it == merged.end() || path.log_prob > it->second.log_prob) {
                merged.insert_or_assign(std::move(full_key), std::move(path));
            }
        }
        paths_.clear();
        for (auto& [key, path] : merged) {
            paths_.push_back(std::move(path));
        }
    }
    if (pending_.empty()) {
        paths_.clear();
    }
}

std::vector<Attribution> IdentificationEngine::finalize() {
    if (pending_.empty()) {
        paths_.clear();
        return {};
    }
    return deliver_best_path();
}

Metrics engine_metrics(const std::vector<TruthRecord>& truth,
                       const std::vector<Attribution>& attributions) {
    Metrics m;
    std::vector<std::size_t> truth_device; // per observation index
    for (const auto& rec : truth) {
        if (!rec.erased) {
            truth_device.push_back(rec.device_index);
        }
    }
    m.packets = truth_device.size();

    std::vector<double> delays;
    for (const auto& attr : attributions) {
        if (!attr.device_index.has_value()) {
            ++m.dropped;
            continue;
        }
        ++m.delivered;
        delays.push_back(static_cast<double>(attr.delay_packets));
        if (attr.resolved_by == ResolvedBy::fast_path) {
            ++m.case_a;
        } else {
            ++m.case_b;
        }
        if (attr.obs_index < truth_device.size() &&
            truth_device[attr.obs_index] == *attr.device_index) {
            ++m.correct;
        } else {
            ++m.misidentified;
        }
    }
    if (m.packets > 0) {
        m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.packets);
        m.drop_rate = static_cast<double>(m.dropped) / static_cast<double>(m.packets);
    }
    if (m.delivered > 0) {
        m.misidentification_rate =
            static_cast<double>(m.misidentified) / static_cast<double>(m.delivered);
    }
    if (!delays.empty()) {
        std::sort(delays.begin(), delays.end());
        double sum = 0.0;
        for (double v : delays) {
            sum += v;
        }
        m.delay_mean = sum / static_cast<double>(delays.size());
        m.delay_p50 = delays[(delays.size() - 1) / 2];
        m.delay_p95 = delays[static_cast<std::size_t>(0.95 * static_cast<double>(delays.size() - 1))];
    }
    return m;
}

nlohmann::json attribution_line(const Attribution& a) {
    nlohmann::json j{{"obs", a.obs_index}, {"ts", a.ts}, {"cn", a.cn},
                     {"delay_packets", a.delay_packets}};
    if (a.device_index.has_value()) {
        j["device_id"] = a.device_id;
        j["case"] = a.resolved_by == ResolvedBy::fast_path ? "A" : "B";
    } else {
        j["device_id"] = "dropped";
        j["case"] = "drop";
    }
    return j;
}

nlohmann::json metrics_json(const Metrics& m) {
    return nlohmann::json{{"packets", m.packets},
                          {"delivered", m.delivered},
                          {"correct", m.correct},
                          {"misidentified", m.misidentified},
                          {"dropped", m.dropped},
                          {"accuracy", m.accuracy},
                          {"misidentification_rate", m.misidentification_rate},
                          {"drop_rate", m.drop_rate},
                          {"delay_mean", m.delay_mean},
                          {"delay_p50", m.delay_p50},
                          {"delay_p95", m.delay_p95},
                          {"case_a", m.case_a},
                          {"case_b", m.case_b}};
}

} // namespace peridot
