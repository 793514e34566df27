#include "doctest.h"

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "peridot/errors.hpp"
#include "peridot/proper.hpp"

using peridot::Classification;
using peridot::Elem;
using peridot::Permutation;
using peridot::ProperClass;
using peridot::ProperSet;

namespace {

std::vector<Permutation> increments(Elem q, std::initializer_list<Elem> deltas) {
    std::vector<Permutation> out;
    for (Elem d : deltas) {
        out.push_back(Permutation::increment(q, d));
    }
    return out;
}

} // namespace

TEST_CASE("incrementing and decrementing permutations form a proper pair") {
    const auto pair = increments(7, {1, 6});
    auto result = peridot::verify_proper(pair, 7, 3);
    CHECK(result.proper);
    CHECK_FALSE(result.witness.has_value());

    // at l = 4 the follower sets overlap
    result = peridot::verify_proper(pair, 7, 4);
    CHECK_FALSE(result.proper);
    REQUIRE(result.witness.has_value());
    const auto& w = *result.witness;
    CHECK(pair[w.sigma_index].apply_power(w.u, w.beta1) == w.v);
    CHECK(pair[w.pi_index].apply_power(w.u, w.beta2) == w.v);
    CHECK(w.sigma_index != w.pi_index);
    CHECK(w.beta1 <= 4);
    CHECK(w.beta2 <= 4);
}

TEST_CASE("three-member set over q = 8 with l = 2") {
    std::vector<Permutation> members;
    members.push_back(Permutation::increment(8, 1));
    members.push_back(Permutation::from_cycle({0, 6, 4, 1, 7, 5, 3, 2}));
    members.push_back(Permutation::from_cycle({0, 3, 7, 6, 2, 5, 1, 4}));
    const auto result = peridot::verify_proper(members, 8, 2);
    CHECK(result.proper);
    CHECK(oracles::proper_by_definition(members, 8, 2));
}

TEST_CASE("verification matches the definition on random increment sets") {
    std::mt19937_64 rng(2026);
    int proper_seen = 0, improper_seen = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const Elem q = 4 + rng() % 9; // 4..12
        const std::uint64_t l = 1 + rng() % 3;
        if (l >= q) {
            continue;
        }
        // pick 2-3 distinct cyclic increments
        std::vector<Elem> units;
        for (Elem d = 1; d < q; ++d) {
            if (std::gcd(d, q) == 1) {
                units.push_back(d);
            }
        }
        std::shuffle(units.begin(), units.end(), rng);
        const std::size_t m = std::min<std::size_t>(units.size(), 2 + rng() % 2);
        std::vector<Permutation> members;
        for (std::size_t i = 0; i < m; ++i) {
            members.push_back(Permutation::increment(q, units[i]));
        }
        const auto result = peridot::verify_proper(members, q, l);
        const bool oracle = oracles::proper_by_definition(members, q, l);
        CHECK(result.proper == oracle);
        (result.proper ? proper_seen : improper_seen)++;
        if (!result.proper) {
            REQUIRE(result.witness.has_value());
            const auto& w = *result.witness;
            CHECK(members[w.sigma_index].apply_power(w.u, w.beta1) == w.v);
            CHECK(members[w.pi_index].apply_power(w.u, w.beta2) == w.v);
        }
    }
    // the sample must exercise both outcomes
    CHECK(proper_seen > 10);
    CHECK(improper_seen > 10);
}

TEST_CASE("verification matches the definition on random explicit sets") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 120; ++trial) {
        const Elem q = 5 + rng() % 5; // 5..9
        const std::uint64_t l = 1 + rng() % 2;
        std::vector<Permutation> members;
        for (int i = 0; i < 3; ++i) {
            std::vector<Elem> cycle(q);
            std::iota(cycle.begin(), cycle.end(), Elem{0});
            std::shuffle(cycle.begin() + 1, cycle.end(), rng);
            members.push_back(Permutation::from_cycle(cycle));
        }
        bool duplicate = false;
        for (std::size_t i = 0; i < members.size() && !duplicate; ++i) {
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                duplicate = duplicate || members[i].same_map(members[j]);
            }
        }
        if (duplicate) {
            continue;
        }
        const auto result = peridot::verify_proper(members, q, l);
        CHECK(result.proper == oracles::proper_by_definition(members, q, l));
    }
}

TEST_CASE("for l = 1 properness is edge-disjointness of Hamiltonian cycles") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const Elem q = 4 + rng() % 5;
        std::vector<Permutation> members;
        for (int i = 0; i < 3; ++i) {
            std::vector<Elem> cycle(q);
            std::iota(cycle.begin(), cycle.end(), Elem{0});
            std::shuffle(cycle.begin() + 1, cycle.end(), rng);
            members.push_back(Permutation::from_cycle(cycle));
        }
        bool duplicate = false;
        for (std::size_t i = 0; i < members.size() && !duplicate; ++i) {
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                duplicate = duplicate || members[i].same_map(members[j]);
            }
        }
        if (duplicate) {
            continue;
        }
        CHECK(peridot::verify_proper(members, q, 1).proper == oracles::edge_disjoint(members));
    }
}

TEST_CASE("upper bound") {
    CHECK(peridot::upper_bound(8, 2) == 3);
    CHECK(peridot::upper_bound(7, 1) == 6);
    CHECK(peridot::upper_bound(7, 3) == 2);
    CHECK(peridot::upper_bound(110, 10) == 10);
    CHECK(peridot::upper_bound(5497554151ULL * 50, 50) == 5497554150ULL);
    CHECK_THROWS_AS(peridot::upper_bound(5, 5), peridot::DomainError);
    CHECK_THROWS_AS(peridot::upper_bound(5, 0), peridot::DomainError);
}

TEST_CASE("classification") {
    ProperSet incdec{7, 3, increments(7, {1, 6}), Classification::proper, std::nullopt, std::nullopt};
    CHECK(peridot::classify(incdec) == ProperClass::perfect); // bound 2 reached, 3 | 6

    ProperSet single{7, 3, increments(7, {1}), Classification::proper, std::nullopt, std::nullopt};
    CHECK(peridot::classify(single) == ProperClass::ordinary);

    ProperSet q8{8, 2, increments(8, {1}), Classification::unverified, std::nullopt, std::nullopt};
    CHECK_THROWS_AS(peridot::classify(q8), peridot::StateError);
}

TEST_CASE("quasiperfect when the bound is met but l does not divide q - 1") {
    // q = 8, l = 2: bound is 3 and 2 does not divide 7
    std::vector<Permutation> members;
    members.push_back(Permutation::increment(8, 1));
    members.push_back(Permutation::from_cycle({0, 6, 4, 1, 7, 5, 3, 2}));
    members.push_back(Permutation::from_cycle({0, 3, 7, 6, 2, 5, 1, 4}));
    REQUIRE(peridot::verify_proper(members, 8, 2).proper);
    ProperSet set{8, 2, members, Classification::proper, std::nullopt, std::nullopt};
    CHECK(peridot::classify(set) == ProperClass::quasiperfect);
}

TEST_CASE("validation rejects malformed member lists") {
    CHECK_THROWS_AS(peridot::verify_proper(increments(8, {1, 2}), 8, 2),
                    peridot::ValidationError); // delta 2 not cyclic mod 8
    CHECK_THROWS_AS(peridot::verify_proper(increments(8, {1, 1}), 8, 2),
                    peridot::ValidationError); // duplicate member
    auto mixed = increments(8, {1});
    mixed.push_back(Permutation::increment(7, 1));
    CHECK_THROWS_AS(peridot::verify_proper(mixed, 8, 2), peridot::ValidationError);
}

TEST_CASE("follower certificate covers every start element") {
    std::vector<Permutation> members = increments(7, {1, 6});
    ProperSet set{7, 3, members, Classification::proper, std::nullopt, std::nullopt};
    const auto cert = peridot::follower_certificate(set);
    REQUIRE(cert.size() == 7);
    for (const auto& entry : cert) {
        const auto uni = entry.at("union").get<std::vector<Elem>>();
        REQUIRE(uni.size() == 6);
        // disjoint union: strictly increasing after sort
        for (std::size_t i = 1; i < uni.size(); ++i) {
            CHECK(uni[i - 1] < uni[i]);
        }
    }
}

TEST_CASE("exhaustive search finds known maxima for small parameters") {
    const auto r52 = peridot::exhaustive_max_search(5, 2);
    CHECK(r52.max_m == 2);
    CHECK(peridot::verify_proper(r52.set.members, 5, 2).proper);

    const auto r51 = peridot::exhaustive_max_search(5, 1);
    CHECK(r51.max_m == 4); // K*_5 decomposes into 4 Hamiltonian cycles
    CHECK(peridot::verify_proper(r51.set.members, 5, 1).proper);

    // The floor((q-1)/l) bound is 3 here but it is not attained: independent brute
    // force over all 720 cyclic permutations confirms the maximum is 2.
    const auto r72 = peridot::exhaustive_max_search(7, 2);
    CHECK(r72.max_m == 2);
    CHECK(r72.max_m < peridot::upper_bound(7, 2));
    CHECK(peridot::verify_proper(r72.set.members, 7, 2).proper);
}

TEST_CASE("search respects the guard") {
    CHECK_THROWS_AS(peridot::exhaustive_max_search(11, 2), peridot::DomainError);
    peridot::SearchOptions opts;
    opts.guard = 4;
    CHECK_THROWS_AS(peridot::exhaustive_max_search(5, 2, opts), peridot::DomainError);
    opts.override_guard = true;
    CHECK(peridot::exhaustive_max_search(5, 2, opts).max_m == 2);
}

TEST_CASE("search with a size limit stops early") {
    peridot::SearchOptions opts;
    opts.size_limit = 1;
    const auto r = peridot::exhaustive_max_search(6, 1, opts);
    CHECK(r.max_m == 1);
}

TEST_CASE("proper set json round trip") {
    ProperSet set{7, 3, increments(7, {1, 6}), Classification::proper, std::nullopt, std::nullopt};
    nlohmann::json j = set;
    const auto back = j.get<ProperSet>();
    CHECK(back.q == 7);
    CHECK(back.l == 3);
    CHECK(back.classification == Classification::proper);
    REQUIRE(back.members.size() == 2);
    CHECK(back.members[1].same_map(set.members[1]));
}

TEST_CASE("implicit construction-backed sets expose increments without members") {
    ProperSet set;
    set.q = 110;
    set.l = 10;
    set.params = peridot::ConstructionParams{11, 10};
    set.classification = Classification::proper;
    CHECK(set.size() == 10);
    CHECK(set.increment_at(0) == 1);
    // i = (p-1)/l = 1 is skipped, so member 1 carries increment 1 + 2*10
    CHECK(set.increment_at(1) == 21);
    CHECK(set.increment_at(9) == 101);
    CHECK_THROWS_AS(set.increment_at(10), peridot::DomainError);
}
