#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peridot/perm.hpp"
#include "peridot/proper.hpp"

namespace peridot {

struct MacKey {
    std::array<std::uint8_t, 16> bytes{};

    std::string hex() const;
    static MacKey from_hex(const std::string& hex);
    static MacKey derive(std::uint64_t seed, std::uint64_t device_index);
};

/// Simulated MAC: a keyed pseudorandom function of (cn, payload) truncated to
/// t bits. Not cryptographic; a wrong key matches with probability ~2^-t,
/// which is the only property the backend relies on.
std::uint64_t compute_mac(const MacKey& key, Elem cn,
                          const std::vector<std::uint8_t>& payload, unsigned t_bits);

struct PacketEvent {
    std::uint64_t ts = 0;
    std::uint32_t region = 0;
    Elem cn = 0;
    std::uint64_t mac = 0;
    std::vector<std::uint8_t> payload;
};

/// One transmission in the hidden log, delivered or not. Only the scorer sees
/// device_index / erased / beta.
struct TruthRecord {
    PacketEvent packet;
    std::size_t device_index = 0;
    std::string device_id;
    bool erased = false;
    std::uint64_t beta = 0; // transmissions since this device's last delivered packet; 0 = none before
};

struct TransmitterState {
    std::string device_id;
    IncrementForm perm;
    Elem current_cn = 0;
    MacKey key;
    std::uint32_t region = 0;
    std::uint64_t commissioned_at = 0;
};

struct ChannelConfig {
    double epsilon = 0.0; // must stay < 1, otherwise nothing ever arrives

    ChannelConfig() = default;
    explicit ChannelConfig(double eps);
};

struct RegionModel {
    std::uint32_t count = 1;
    double change_prob = 0.0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> adjacency; // symmetric

    std::vector<std::uint32_t> neighbors(std::uint32_t region) const;
};

struct ScriptStep {
    std::size_t device = 0;
    bool erased = false;
};

struct ScenarioConfig {
    std::optional<ConstructionParams> construction;
    std::vector<Permutation> explicit_members;
    Elem q = 0;
    std::size_t device_count = 0;
    double epsilon = 0.0;
    std::uint64_t events = 0;
    std::uint64_t seed = 0;
    unsigned t_bits = 32;
    double mean_interval = 10.0;
    RegionModel regions;
    std::vector<std::pair<std::size_t, std::uint64_t>> commissioning; // (device, time); default all at 0
    std::vector<Elem> initial_cns; // optional; otherwise uniform draws
    std::size_t payload_bytes = 4;
    std::vector<ScriptStep> script; // when nonempty, replaces traffic + channel randomness

    static ScenarioConfig from_json(const nlohmann::json& j);
};

struct DeviceInfo {
    std::string device_id;
    Elem q = 0;
    Elem delta = 0;
    MacKey key;
    std::uint32_t region = 0;
    std::uint64_t commissioned_at = 0;
};

struct ScenarioResult {
    std::vector<PacketEvent> trace; // delivered packets only, in arrival order
    std::vector<TruthRecord> truth; // every transmission
    std::vector<DeviceInfo> devices;
};

/// Emit the next packet: CN advances by the device's permutation, the MAC
/// covers (cn, payload).
PacketEvent next_packet(TransmitterState& state, std::vector<std::uint8_t> payload,
                        std::uint64_t ts, unsigned t_bits);

/// i.i.d. erasure with probability epsilon; delivered packets are unmodified.
bool transmit_erased(const ChannelConfig& channel, std::mt19937_64& rng);

/// Deterministic given the config (seed included).
ScenarioResult run_scenario(const ScenarioConfig& config);

nlohmann::json trace_line(const PacketEvent& p);
PacketEvent trace_line_parse(const nlohmann::json& j);
nlohmann::json truth_line(const TruthRecord& r);
TruthRecord truth_line_parse(const nlohmann::json& j);
nlohmann::json devices_json(const std::vector<DeviceInfo>& devices, unsigned t_bits);
std::vector<DeviceInfo> devices_json_parse(const nlohmann::json& j);

std::string base64_encode(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> base64_decode(const std::string& text);

} // namespace peridot
