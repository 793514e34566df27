#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace peridot {

/// An element of Z_q. Alphabets up to 2^40 and beyond fit comfortably.
using Elem = std::uint64_t;

/// The arithmetic-progression permutation u -> (u + delta) mod q.
struct IncrementForm {
    Elem q = 0;
    Elem delta = 0;
};

/// A permutation of Z_q, stored either as an explicit image table or in
/// increment form. Increment form needs O(1) storage and is the only
/// representation that scales to large alphabets; explicit tables exist for
/// small-q search and verification.
class Permutation {
public:
    Permutation() = default; // empty placeholder, q() == 0

    static Permutation increment(Elem q, Elem delta);

    /// Build from an image table: images[u] is the successor of u.
    /// Throws ValidationError if the table is not a bijection.
    static Permutation from_image_table(std::vector<Elem> images);

    /// Build from cycle notation, e.g. (0, 6, 4, 1, 7, 5, 3, 2): each listed
    /// element maps to the next, the last wraps to the first. The cycle must
    /// cover Z_q exactly once, so the result is always cyclic.
    static Permutation from_cycle(const std::vector<Elem>& cycle);

    Elem q() const;
    bool is_increment_form() const;
    Elem delta() const; // increment form only

    Elem apply(Elem u) const;

    /// sigma^beta[u]. O(1) for increment form, O(beta) for explicit tables.
    /// beta = 0 is a domain error unless allow_identity is set.
    Elem apply_power(Elem u, std::uint64_t beta, bool allow_identity = false) const;

    /// The ordered l-follower set [sigma[u], ..., sigma^l[u]]. Requires l < q.
    std::vector<Elem> follower_set(Elem u, std::uint64_t l) const;

    /// True iff the permutation is a single cycle with orbit Z_q.
    bool is_cyclic() const;

    /// Materialize the image table. Guarded against huge alphabets.
    std::vector<Elem> image_table() const;

    /// Cycle notation starting at 0. Requires a cyclic permutation.
    std::vector<Elem> cycle_notation() const;

    bool same_map(const Permutation& other) const;

private:
    explicit Permutation(IncrementForm inc) : repr_(inc) {}
    explicit Permutation(std::vector<Elem> images) : repr_(std::move(images)) {}

    std::variant<IncrementForm, std::vector<Elem>> repr_;
};

/// JSON: increment form as {"q": ..., "delta": ...}, explicit form as a
/// cycle-notation integer array.
void to_json(nlohmann::json& j, const Permutation& p);
void from_json(const nlohmann::json& j, Permutation& p);

} // namespace peridot
