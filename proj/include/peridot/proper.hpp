#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "peridot/perm.hpp"

namespace peridot {

enum class Classification { unverified, proper, improper };
enum class ProperClass { ordinary, quasiperfect, perfect };

/// A concrete violation of the uniqueness condition:
/// sigma^beta1[u] = v = pi^beta2[u] with sigma != pi.
struct ImproperWitness {
    Elem u = 0;
    Elem v = 0;
    std::uint64_t beta1 = 0;
    std::uint64_t beta2 = 0;
    std::size_t sigma_index = 0;
    std::size_t pi_index = 0;
};

/// Parameters of the quasiperfect construction (q = p*l, m = p-1). Sets built
/// that way can carry these instead of materialized members, which keeps
/// planner-scale sets (m in the billions) representable.
struct ConstructionParams {
    std::uint64_t p = 0;
    std::uint64_t l = 0;
};

struct ProperSet {
    Elem q = 0;
    std::uint64_t l = 0;
    std::vector<Permutation> members;
    Classification classification = Classification::unverified;
    std::optional<ImproperWitness> witness;
    std::optional<ConstructionParams> params; // set iff members are implicit or constructed

    std::size_t size() const;
    /// Increment of member i; works for both materialized and implicit sets.
    Elem increment_at(std::size_t i) const;
    bool members_materialized() const { return !members.empty() || size() == 0; }
};

struct VerifyResult {
    bool proper = false;
    std::optional<ImproperWitness> witness;
};

/// Check the follower-set disjointness criterion for all u and all pairs of
/// members. On failure returns the lexicographically smallest witness
/// (smallest u, then member indices, then beta values).
VerifyResult verify_proper(const std::vector<Permutation>& members, Elem q, std::uint64_t l);

/// floor((q-1)/l), the maximum size of a (q,l)-proper set.
std::uint64_t upper_bound(Elem q, std::uint64_t l);

/// Requires a verified-proper set.
ProperClass classify(const ProperSet& set);

struct SearchOptions {
    Elem guard = 10;            // refuse q above this unless overridden
    bool override_guard = false;
    std::optional<std::uint64_t> size_limit; // stop once a set this big is found
};

struct SearchResult {
    std::uint64_t max_m = 0;
    ProperSet set;
};

/// Exhaustive maximum search over all (q,l)-proper sets. Properness is
/// invariant under conjugation and every cyclic permutation is conjugate to
/// the incrementing one, so the search fixes the first member to omega_1 and
/// extends with lexicographically larger candidates only.
SearchResult exhaustive_max_search(Elem q, std::uint64_t l, const SearchOptions& opts = {});

/// Re-verification certificate: for each u, the sorted union of all members'
/// l-follower sets (their disjointness is what properness asserts).
nlohmann::json follower_certificate(const ProperSet& set);

const char* to_string(Classification c);
const char* to_string(ProperClass c);

void to_json(nlohmann::json& j, const ImproperWitness& w);
void from_json(const nlohmann::json& j, ImproperWitness& w);
void to_json(nlohmann::json& j, const ProperSet& s);
void from_json(const nlohmann::json& j, ProperSet& s);

} // namespace peridot
