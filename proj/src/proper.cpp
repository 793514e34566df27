#include "peridot/proper.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <string>
#include <unordered_map>

#include "peridot/errors.hpp"

namespace peridot {

namespace {

void validate_candidates(const std::vector<Permutation>& members, Elem q, std::uint64_t l) {
    if (l < 1 || l >= q) {
        throw DomainError("properness requires 1 <= l < q");
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (members[i].q() != q) {
            throw ValidationError("member " + std::to_string(i) + " has alphabet size " +
                                  std::to_string(members[i].q()) + ", expected " + std::to_string(q));
        }
        if (!members[i].is_cyclic()) {
            throw ValidationError("member " + std::to_string(i) + " is not cyclic with orbit Z_q");
        }
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            if (members[i].same_map(members[j])) {
                throw ValidationError("members " + std::to_string(i) + " and " + std::to_string(j) +
                                      " are the same map");
            }
        }
    }
}

Elem mul_mod(Elem a, Elem b, Elem q) {
    return static_cast<Elem>((static_cast<unsigned __int128>(a) * b) % q);
}

// Lexicographically smallest witness at a fixed u (member pair, then betas).
ImproperWitness witness_at(const std::vector<Permutation>& members, Elem u, std::uint64_t l) {
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            for (std::uint64_t b1 = 1; b1 <= l; ++b1) {
                const Elem v1 = members[i].apply_power(u, b1);
                for (std::uint64_t b2 = 1; b2 <= l; ++b2) {
                    if (v1 == members[j].apply_power(u, b2)) {
                        return ImproperWitness{u, v1, b1, b2, i, j};
                    }
                }
            }
        }
    }
    throw StateError("witness_at called without a collision at u");
}

} // namespace

std::size_t ProperSet::size() const {
    if (members.empty() && params.has_value() && params->p > 0) {
        return params->p - 1;
    }
    return members.size();
}

Elem ProperSet::increment_at(std::size_t i) const {
    if (!members.empty()) {
        return members.at(i).delta();
    }
    if (!params.has_value()) {
        throw StateError("set has neither members nor construction params");
    }
    if (i >= params->p - 1) {
        throw DomainError("member index out of range");
    }
    const std::uint64_t skipped = (params->p - 1) / params->l;
    const std::uint64_t keep_i = (i < skipped) ? i : i + 1;
    return 1 + keep_i * params->l;
}

std::uint64_t upper_bound(Elem q, std::uint64_t l) {
    if (l < 1 || l >= q) {
        throw DomainError("upper bound requires 1 <= l < q");
    }
    return (q - 1) / l;
}

VerifyResult verify_proper(const std::vector<Permutation>& members, Elem q, std::uint64_t l) {
    validate_candidates(members, q, l);
    if (members.size() <= 1) {
        return VerifyResult{true, std::nullopt};
    }

    const bool all_increment =
        std::all_of(members.begin(), members.end(),
                    [](const Permutation& p) { return p.is_increment_form(); });

    if (all_increment) {
        // Follower sets of omega_delta are translates of {beta*delta mod q},
        // so disjointness for all u reduces to distinctness of those residues,
        // and any collision shows up at u = 0.
        std::unordered_map<Elem, std::pair<std::size_t, std::uint64_t>> seen;
        seen.reserve(members.size() * l);
        bool collision = false;
        for (std::size_t i = 0; i < members.size() && !collision; ++i) {
            const Elem d = members[i].delta();
            for (std::uint64_t b = 1; b <= l; ++b) {
                const Elem r = mul_mod(b, d, q);
                if (!seen.emplace(r, std::make_pair(i, b)).second) {
                    collision = true;
                    break;
                }
            }
        }
        if (!collision) {
            return VerifyResult{true, std::nullopt};
        }
        return VerifyResult{false, witness_at(members, 0, l)};
    }

    for (Elem u = 0; u < q; ++u) {
        std::unordered_map<Elem, std::size_t> owner;
        owner.reserve(members.size() * l);
        bool collision = false;
        for (std::size_t i = 0; i < members.size() && !collision; ++i) {
            for (Elem v : members[i].follower_set(u, l)) {
                auto [it, inserted] = owner.emplace(v, i);
                if (!inserted && it->second != i) {
                    collision = true;
                    break;
                }
            }
        }
        if (collision) {
            return VerifyResult{false, witness_at(members, u, l)};
        }
    }
    return VerifyResult{true, std::nullopt};
}

ProperClass classify(const ProperSet& set) {
    if (set.classification != Classification::proper) {
        throw StateError("classify requires a verified-proper set");
    }
    const std::uint64_t bound = upper_bound(set.q, set.l);
    if (set.size() < bound) {
        return ProperClass::ordinary;
    }
    return ((set.q - 1) % set.l == 0) ? ProperClass::perfect : ProperClass::quasiperfect;
}

namespace {

struct SearchSpace {
    Elem q;
    std::uint64_t l;
    std::vector<std::vector<Elem>> tables;        // all cyclic permutations, lex order
    std::vector<std::vector<std::uint64_t>> fmask; // per perm, per u: follower-set bitmask

    bool compatible(std::size_t a, std::size_t b) const {
        for (Elem u = 0; u < q; ++u) {
            if (fmask[a][u] & fmask[b][u]) {
                return false;
            }
        }
        return true;
    }
};

SearchSpace enumerate_cyclic(Elem q, std::uint64_t l) {
    SearchSpace space{q, l, {}, {}};
    std::vector<Elem> rest(q - 1);
    std::iota(rest.begin(), rest.end(), Elem{1});
    do {
        std::vector<Elem> images(q);
        Elem prev = 0;
        for (Elem e : rest) {
            images[prev] = e;
            prev = e;
        }
        images[prev] = 0;
        std::vector<std::uint64_t> masks(q, 0);
        for (Elem u = 0; u < q; ++u) {
            Elem v = u;
            for (std::uint64_t b = 1; b <= l; ++b) {
                v = images[v];
                masks[u] |= std::uint64_t{1} << v;
            }
        }
        space.tables.push_back(std::move(images));
        space.fmask.push_back(std::move(masks));
    } while (std::next_permutation(rest.begin(), rest.end()));
    return space;
}

struct CliqueSearch {
    const SearchSpace& space;
    std::uint64_t bound;
    std::uint64_t target; // min(bound, size_limit)
    std::vector<std::size_t> best;
    std::vector<std::size_t> current;

    bool done() const { return best.size() >= target; }

    void extend(const std::vector<std::size_t>& cand) {
        if (current.size() > best.size()) {
            best = current;
        }
        if (done()) {
            return;
        }
        for (std::size_t k = 0; k < cand.size(); ++k) {
            if (current.size() + (cand.size() - k) <= best.size()) {
                break;
            }
            const std::size_t c = cand[k];
            std::vector<std::size_t> next;
            next.reserve(cand.size() - k - 1);
            for (std::size_t k2 = k + 1; k2 < cand.size(); ++k2) {
                if (space.compatible(c, cand[k2])) {
                    next.push_back(cand[k2]);
                }
            }
            current.push_back(c);
            extend(next);
            current.pop_back();
            if (done()) {
                return;
            }
        }
    }
};

} // namespace

SearchResult exhaustive_max_search(Elem q, std::uint64_t l, const SearchOptions& opts) {
    if (l < 1 || l >= q) {
        throw DomainError("search requires 1 <= l < q");
    }
    if (q > opts.guard && !opts.override_guard) {
        throw DomainError("q = " + std::to_string(q) + " exceeds the search guard (" +
                          std::to_string(opts.guard) + "); pass the override flag to force");
    }
    if (q > 64) {
        throw DomainError("exhaustive search is limited to q <= 64");
    }

    const std::uint64_t bound = upper_bound(q, l);
    SearchSpace space = enumerate_cyclic(q, l);

    // Properness is conjugation-invariant and all cyclic permutations are
    // conjugate, so a maximum set can be assumed to contain omega_1, which is
    // the lexicographically first table.
    std::vector<std::size_t> cand;
    for (std::size_t c = 1; c < space.tables.size(); ++c) {
        if (space.compatible(0, c)) {
            cand.push_back(c);
        }
    }

    CliqueSearch search{space, bound,
                        std::min<std::uint64_t>(bound, opts.size_limit.value_or(bound)),
                        {0}, {0}};
    search.extend(cand);

    ProperSet out;
    out.q = q;
    out.l = l;
    for (std::size_t idx : search.best) {
        out.members.push_back(Permutation::from_image_table(space.tables[idx]));
    }
    out.classification = Classification::proper;
    return SearchResult{search.best.size(), std::move(out)};
}

nlohmann::json follower_certificate(const ProperSet& set) {
    const std::size_t m = set.size();
    if (static_cast<double>(set.q) * static_cast<double>(m) * static_cast<double>(set.l) > 2e7) {
        throw DomainError("certificate too large to materialize");
    }
    std::vector<Permutation> members = set.members;
    if (members.empty() && set.params.has_value()) {
        for (std::size_t i = 0; i < m; ++i) {
            members.push_back(Permutation::increment(set.q, set.increment_at(i)));
        }
    }
    nlohmann::json cert = nlohmann::json::array();
    for (Elem u = 0; u < set.q; ++u) {
        std::vector<Elem> uni;
        uni.reserve(m * set.l);
        for (const auto& member : members) {
            for (Elem v : member.follower_set(u, set.l)) {
                uni.push_back(v);
            }
        }
        std::sort(uni.begin(), uni.end());
        cert.push_back(nlohmann::json{{"u", u}, {"union", uni}});
    }
    return cert;
}

const char* to_string(Classification c) {
    switch (c) {
    case Classification::unverified: return "unverified";
    case Classification::proper: return "proper";
    case Classification::improper: return "improper";
    }
    return "?";
}

const char* to_string(ProperClass c) {
    switch (c) {
    case ProperClass::ordinary: return "ordinary";
    case ProperClass::quasiperfect: return "quasiperfect";
    case ProperClass::perfect: return "perfect";
    }
    return "?";
}

void to_json(nlohmann::json& j, const ImproperWitness& w) {
    j = nlohmann::json{{"u", w.u},           {"v", w.v},
                       {"beta1", w.beta1},   {"beta2", w.beta2},
                       {"sigma_index", w.sigma_index}, {"pi_index", w.pi_index}};
}

void from_json(const nlohmann::json& j, ImproperWitness& w) {
    j.at("u").get_to(w.u);
    j.at("v").get_to(w.v);
    j.at("beta1").get_to(w.beta1);
    j.at("beta2").get_to(w.beta2);
    j.at("sigma_index").get_to(w.sigma_index);
    j.at("pi_index").get_to(w.pi_index);
}

void to_json(nlohmann::json& j, const ProperSet& s) {
    j = nlohmann::json{{"q", s.q}, {"l", s.l}, {"classification", to_string(s.classification)}};
    if (s.params.has_value()) {
        j["construction"] = {{"p", s.params->p}, {"l", s.params->l}};
        j["m"] = s.size();
    }
    if (!s.members.empty() || !s.params.has_value()) {
        j["members"] = s.members;
    }
    if (s.witness.has_value()) {
        j["witness"] = *s.witness;
    }
}

void from_json(const nlohmann::json& j, ProperSet& s) {
    j.at("q").get_to(s.q);
    j.at("l").get_to(s.l);
    s.members.clear();
    if (j.contains("members")) {
        s.members = j.at("members").get<std::vector<Permutation>>();
    }
    if (j.contains("construction")) {
        ConstructionParams params;
        j.at("construction").at("p").get_to(params.p);
        j.at("construction").at("l").get_to(params.l);
        s.params = params;
    } else {
        s.params.reset();
    }
    s.classification = Classification::unverified;
    if (j.contains("classification")) {
        const std::string c = j.at("classification").get<std::string>();
        if (c == "proper") {
            s.classification = Classification::proper;
        } else if (c == "improper") {
            s.classification = Classification::improper;
        }
    }
    s.witness.reset();
    if (j.contains("witness")) {
        s.witness = j.at("witness").get<ImproperWitness>();
    }
}

} // namespace peridot
