#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "peridot/proper.hpp"

namespace peridot {

/// Deterministic Miller-Rabin, exact for all 64-bit integers.
bool is_prime_u64(std::uint64_t n);

/// Modular inverse via extended gcd. Throws DomainError if gcd(a, m) != 1.
std::uint64_t mod_inverse(std::uint64_t a, std::uint64_t m);

/// The quasiperfect construction: for prime p and l | (p-1), the increments
/// {1 + i*l | i = 0..p-1, i != (p-1)/l} over q = p*l form a (q,l)-proper set
/// of size m = p-1. Members are materialized only for moderate m; larger sets
/// stay implicit behind ConstructionParams.
ProperSet construct(std::uint64_t p, std::uint64_t l);

/// The unique beta in [1, q] with (u + beta*delta) mod q = v. A repeat of the
/// same CN (v = u) maps to beta = q, a full nonce cycle.
std::uint64_t recover_beta(std::uint64_t delta, std::uint64_t q, Elem u, Elem v);

struct PlanReport {
    unsigned cn_bits = 0;
    std::uint64_t l = 0;
    std::uint64_t p = 0;
    std::uint64_t q = 0;
    std::uint64_t m = 0;
    unsigned baseline_sn_bits = 0;
    unsigned baseline_id_bits = 0;
    int bits_saved = 0;
    double nonce_reuse_factor = 0.0;  // q / 2^baseline_sn_bits
    double device_count_delta = 0.0;  // (p-1) / 2^baseline_id_bits - 1
};

/// Find the largest prime p with p*l <= 2^cn_bits and l | (p-1), and derive
/// the protocol-size comparison against a baseline ID+SN layout.
PlanReport plan_parameters(unsigned cn_bits, std::uint64_t l,
                           unsigned baseline_sn_bits, unsigned baseline_id_bits);

void to_json(nlohmann::json& j, const PlanReport& r);
std::string plan_table(const PlanReport& r);

} // namespace peridot
