#include "peridot/perm.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "peridot/errors.hpp"

namespace peridot {

namespace {

constexpr Elem kMaxExplicitQ = 1'000'000;

Elem mul_mod(Elem a, Elem b, Elem q) {
    return static_cast<Elem>((static_cast<unsigned __int128>(a) * b) % q);
}

} // namespace

Permutation Permutation::increment(Elem q, Elem delta) {
    if (q < 1) {
        throw DomainError("alphabet size q must be >= 1");
    }
    if (delta >= q) {
        throw DomainError("increment delta must be in [0, q)");
    }
    return Permutation(IncrementForm{q, delta});
}

Permutation Permutation::from_image_table(std::vector<Elem> images) {
    const Elem q = images.size();
    if (q < 1) {
        throw ValidationError("image table must be nonempty");
    }
    std::vector<bool> seen(q, false);
    for (Elem v : images) {
        if (v >= q || seen[v]) {
            throw ValidationError("image table is not a bijection on Z_q");
        }
        seen[v] = true;
    }
    return Permutation(std::move(images));
}

Permutation Permutation::from_cycle(const std::vector<Elem>& cycle) {
    const Elem q = cycle.size();
    if (q < 1) {
        throw ValidationError("cycle must be nonempty");
    }
    std::vector<Elem> images(q, q); // q marks "unset"
    for (std::size_t i = 0; i < cycle.size(); ++i) {
        const Elem from = cycle[i];
        const Elem to = cycle[(i + 1) % cycle.size()];
        if (from >= q) {
            throw ValidationError("cycle element " + std::to_string(from) +
                                  " out of range for q = " + std::to_string(q));
        }
        if (images[from] != q) {
            throw ValidationError("cycle repeats element " + std::to_string(from));
        }
        images[from] = to;
    }
    return Permutation(std::move(images));
}

Elem Permutation::q() const {
    if (std::holds_alternative<IncrementForm>(repr_)) {
        return std::get<IncrementForm>(repr_).q;
    }
    return std::get<std::vector<Elem>>(repr_).size();
}

bool Permutation::is_increment_form() const {
    return std::holds_alternative<IncrementForm>(repr_);
}

Elem Permutation::delta() const {
    if (!is_increment_form()) {
        throw StateError("delta() requires increment form");
    }
    return std::get<IncrementForm>(repr_).delta;
}

Elem Permutation::apply(Elem u) const {
    const Elem n = q();
    if (u >= n) {
        throw DomainError("element out of range");
    }
    if (is_increment_form()) {
        const Elem d = std::get<IncrementForm>(repr_).delta;
        return (u + d) % n; // u, d < q <= 2^63, no overflow
    }
    return std::get<std::vector<Elem>>(repr_)[u];
}

Elem Permutation::apply_power(Elem u, std::uint64_t beta, bool allow_identity) const {
    const Elem n = q();
    if (u >= n) {
        throw DomainError("element out of range");
    }
    if (beta == 0) {
        if (!allow_identity) {
            throw DomainError("beta must be >= 1");
        }
        return u;
    }
    if (is_increment_form()) {
        const Elem d = std::get<IncrementForm>(repr_).delta;
        return (u + mul_mod(beta % n, d, n)) % n;
    }
    // Explicit form: plain iteration. A cyclic permutation has period q, so
    // large beta can be reduced first.
    const auto& images = std::get<std::vector<Elem>>(repr_);
    std::uint64_t steps = beta;
    if (steps >= n && is_cyclic()) {
        steps %= n;
    }
    Elem v = u;
    for (std::uint64_t i = 0; i < steps; ++i) {
        v = images[v];
    }
    return v;
}

std::vector<Elem> Permutation::follower_set(Elem u, std::uint64_t l) const {
    const Elem n = q();
    if (u >= n) {
        throw DomainError("element out of range");
    }
    if (l < 1 || l >= n) {
        throw DomainError("follower set requires 1 <= l < q");
    }
    std::vector<Elem> members;
    members.reserve(l);
    Elem v = u;
    for (std::uint64_t b = 1; b <= l; ++b) {
        v = apply(v);
        members.push_back(v);
    }
    return members;
}

bool Permutation::is_cyclic() const {
    if (is_increment_form()) {
        const auto& inc = std::get<IncrementForm>(repr_);
        if (inc.q == 1) {
            return true;
        }
        return std::gcd(inc.delta, inc.q) == 1;
    }
    const auto& images = std::get<std::vector<Elem>>(repr_);
    const Elem n = images.size();
    Elem v = 0;
    for (Elem steps = 1; steps <= n; ++steps) {
        v = images[v];
        if (v == 0) {
            return steps == n;
        }
    }
    return false; // unreachable for a bijection
}

std::vector<Elem> Permutation::image_table() const {
    const Elem n = q();
    if (n > kMaxExplicitQ) {
        throw DomainError("refusing to materialize image table for q > 10^6");
    }
    if (!is_increment_form()) {
        return std::get<std::vector<Elem>>(repr_);
    }
    std::vector<Elem> images(n);
    for (Elem u = 0; u < n; ++u) {
        images[u] = apply(u);
    }
    return images;
}

std::vector<Elem> Permutation::cycle_notation() const {
    if (!is_cyclic()) {
        throw StateError("cycle notation requires a cyclic permutation");
    }
    const Elem n = q();
    if (n > kMaxExplicitQ) {
        throw DomainError("refusing to materialize cycle for q > 10^6");
    }
    std::vector<Elem> cycle;
    cycle.reserve(n);
    Elem v = 0;
    for (Elem i = 0; i < n; ++i) {
        cycle.push_back(v);
        v = apply(v);
    }
    return cycle;
}

bool Permutation::same_map(const Permutation& other) const {
    if (q() != other.q()) {
        return false;
    }
    if (is_increment_form() && other.is_increment_form()) {
        return delta() == other.delta();
    }
    return image_table() == other.image_table();
}

void to_json(nlohmann::json& j, const Permutation& p) {
    if (p.is_increment_form()) {
        j = nlohmann::json{{"q", p.q()}, {"delta", p.delta()}};
    } else {
        j = p.cycle_notation();
    }
}

void from_json(const nlohmann::json& j, Permutation& p) {
    if (j.is_array()) {
        p = Permutation::from_cycle(j.get<std::vector<Elem>>());
    } else if (j.is_object() && j.contains("q") && j.contains("delta")) {
        p = Permutation::increment(j.at("q").get<Elem>(), j.at("delta").get<Elem>());
    } else {
        throw ValidationError("permutation JSON must be a cycle array or {q, delta}");
    }
}

} // namespace peridot
