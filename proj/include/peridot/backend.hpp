#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peridot/simnet.hpp"

namespace peridot {

struct DeviceRecord {
    std::string device_id;
    Elem q = 0;
    Elem delta = 0;
    Elem inv_delta = 0; // delta^-1 mod q, precomputed
    MacKey key;
    bool identified = false;
    Elem last_cn = 0;       // valid when identified
    std::uint64_t last_ts = 0;
    std::uint32_t last_region = 0;

    static DeviceRecord from_info(const DeviceInfo& info);
};

struct EngineConfig {
    double epsilon = 0.05;       // backend's erasure estimate, may differ from the channel
    double dominance_ratio = 1e3; // fast path: best candidate vs runner-up
    double delivery_ratio = 1e3;  // HMM: best path vs runner-up
    double beam_ratio = 1e12;     // paths this far below the best are pruned
    std::size_t max_paths = 4096;
    std::size_t horizon = 64;     // observations a packet may stay pending
    unsigned t_bits = 32;
    bool mac_filter = true;       // check MACs inside HMM transitions
    std::uint64_t l = 0;          // plausibility cutoff for candidates; 0 = no cutoff
    bool region_filter = false;
    RegionModel regions;

    static EngineConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct CandidateScore {
    std::size_t device_index = 0;
    std::uint64_t beta = 0;
    double probability = 0.0; // P_beta = (1-eps) eps^(beta-1), times region factor
    bool plausible = true;    // false when beta > l or region rules it out
};

enum class ResolvedBy { fast_path, hmm, dropped };

struct Attribution {
    std::size_t obs_index = 0;
    std::uint64_t ts = 0;
    Elem cn = 0;
    std::optional<std::size_t> device_index; // empty = dropped
    std::string device_id;                   // empty = dropped
    std::size_t delay_packets = 0;
    ResolvedBy resolved_by = ResolvedBy::dropped;
};

/// Transition weight shared by the engine and any external scorer: log of the
/// probability that device (delta over Z_q) with last CN `last` (nullopt =
/// never observed, uniform prior) emits the observed CN next.
double transition_log_weight(std::optional<Elem> last, Elem delta, Elem inv_delta, Elem q,
                             Elem observed, double epsilon);

/// The identification pipeline: per-packet candidate scoring over identified
/// devices, fast-path MAC confirmation, and Viterbi decoding over the
/// remaining hypotheses with beam pruning and delayed delivery.
class IdentificationEngine {
public:
    IdentificationEngine(std::vector<DeviceRecord> devices, EngineConfig config);

    /// Process one received packet in arrival order. May return several
    /// attributions when a dominant path delivers buffered packets.
    std::vector<Attribution> observe(const PacketEvent& packet);

    /// Flush: deliver the best surviving path's pending attributions, drop
    /// packets that stay ambiguous (ties).
    std::vector<Attribution> finalize();

    std::vector<CandidateScore> score_candidates(const PacketEvent& packet) const;

    const std::vector<DeviceRecord>& devices() const { return devices_; }
    std::size_t pending_count() const { return pending_.size(); }
    std::size_t path_count() const { return paths_.size(); }

private:
    struct Path {
        std::vector<std::optional<Elem>> last_cn; // per device
        double log_prob = 0.0;
        std::vector<std::uint32_t> attributions;  // device per pending packet
    };

    std::optional<Attribution> try_fast_path(const PacketEvent& packet,
                                             const std::vector<CandidateScore>& scores);
    std::vector<Attribution> hmm_observe(const PacketEvent& packet);
    std::vector<Attribution> deliver_best_path();
    void drop_expired(std::vector<Attribution>& out);
    bool region_plausible(std::uint32_t seen, std::uint32_t packet_region) const;
    void apply_delivery(std::size_t device, const PacketEvent& packet);

    std::vector<DeviceRecord> devices_;
    EngineConfig config_;
    std::vector<Path> paths_;
    struct Pending {
        PacketEvent packet;
        std::size_t obs_index = 0;
    };
    std::vector<Pending> pending_;
    std::size_t obs_counter_ = 0;
};

struct Metrics {
    std::size_t packets = 0;     // delivered over the channel (engine input)
    std::size_t delivered = 0;   // attributed by the engine
    std::size_t correct = 0;
    std::size_t misidentified = 0;
    std::size_t dropped = 0;
    double accuracy = 0.0;
    double misidentification_rate = 0.0;
    double drop_rate = 0.0;
    double delay_mean = 0.0;
    double delay_p50 = 0.0;
    double delay_p95 = 0.0;
    std::size_t case_a = 0; // resolved by fast path
    std::size_t case_b = 0; // resolved via HMM
};

/// Score engine output against the hidden ground truth. Attributions are
/// joined to the truth's non-erased records by observation index.
Metrics engine_metrics(const std::vector<TruthRecord>& truth,
                       const std::vector<Attribution>& attributions);

nlohmann::json attribution_line(const Attribution& a);
nlohmann::json metrics_json(const Metrics& m);

} // namespace peridot
