#pragma once

// Analytic evaluators for R(P_S) in the cataloged pattern families. They are
// exact for consistent inputs and serve both as fast paths and as oracles
// against the LP. Inconsistent inputs still get the formula value, tagged
// not-exact via the attached inconsistency measure.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcar/lp.hpp"
#include "mcar/model.hpp"

namespace mcar {

enum class FamilyTag {
    Rs2Triple,       // {1,2},{2,3},{1,3} on r x s x 2
    R22Triple,       // same with s = 2 (fast path)
    Chain4,          // {1,2},{2,3},{3,4},{1,4} on r x 2 x 2 x 2
    D4AllButOne,     // binary, all pairs except {2,4}
    D4AllPairs,      // binary, all six pairs
    D4SingleTriple,  // binary, {1,2,3},{1,4},{2,4},{3,4}
    D4AllTriples,    // binary, all four triples
};

inline const char* family_name(FamilyTag tag) {
    switch (tag) {
        case FamilyTag::Rs2Triple: return "rs2";
        case FamilyTag::R22Triple: return "r22";
        case FamilyTag::Chain4: return "chain4";
        case FamilyTag::D4AllButOne: return "d4-all-but-one";
        case FamilyTag::D4AllPairs: return "d4-all-pairs";
        case FamilyTag::D4SingleTriple: return "d4-single-triple";
        case FamilyTag::D4AllTriples: return "d4-all-triples";
    }
    return "?";
}

inline std::optional<FamilyTag> family_from_name(const std::string& name) {
    for (FamilyTag t :
         {FamilyTag::Rs2Triple, FamilyTag::R22Triple, FamilyTag::Chain4,
          FamilyTag::D4AllButOne, FamilyTag::D4AllPairs,
          FamilyTag::D4SingleTriple, FamilyTag::D4AllTriples})
        if (name == family_name(t)) return t;
    return std::nullopt;
}

struct ClosedFormResult {
    double index = 0.0;
    double inconsistency = 0.0;  // formula is exact only when this is ~0
    bool exact() const { return inconsistency <= 1e-9; }
};

namespace closed_detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline void require(bool ok, const char* what) {
    if (!ok) throw FamilyError(std::string("family mismatch: ") + what);
}

// Canonical triple layout: patterns {0,1},{1,2},{0,2} with m2 = 2.
struct TripleTables {
    int r = 0, s = 0;
    const std::vector<double>* t01 = nullptr;  // r x s
    const std::vector<double>* t12 = nullptr;  // s x 2
    const std::vector<double>* t02 = nullptr;  // r x 2
};

inline TripleTables triple_layout(const MarginalSequence& seq) {
    require(seq.space().dim() == 3, "expected 3 variables");
    require(seq.space().size(2) == 2, "third variable must be binary");
    TripleTables t;
    t.r = seq.space().size(0);
    t.s = seq.space().size(1);
    const int i01 = seq.collection().find(Pattern{0, 1});
    const int i12 = seq.collection().find(Pattern{1, 2});
    const int i02 = seq.collection().find(Pattern{0, 2});
    require(i01 >= 0 && i12 >= 0 && i02 >= 0 && seq.count() == 3,
            "expected the three pairwise patterns");
    t.t01 = &seq.table(i01);
    t.t12 = &seq.table(i12);
    t.t02 = &seq.table(i02);
    return t;
}

}  // namespace closed_detail

// R = 2 max_{A,B} (-p_AB. + p_A.1 + p_.B1 - p_..1)_+ over subsets A of [r],
// B of [s]. B is enumerated; for fixed B the optimal A collects exactly the
// rows with p_i.1 > p_iB. (ties excluded, which leaves the value unchanged).
inline ClosedFormResult index_rs2(const MarginalSequence& seq) {
    using namespace closed_detail;
    const TripleTables t = triple_layout(seq);
    require(t.s <= 20, "2^s enumeration guard exceeded");

    const auto& t01 = *t.t01;
    const auto& t12 = *t.t12;
    const auto& t02 = *t.t02;
    double p_dd1 = 0.0;  // p_..1 read from the {2,3} table
    for (int j = 0; j < t.s; ++j) p_dd1 += t12[static_cast<std::size_t>(2 * j)];

    double best = 0.0;
    const std::uint64_t nb = std::uint64_t{1} << t.s;
    for (std::uint64_t bmask = 0; bmask < nb; ++bmask) {
        double p_B1 = 0.0;
        for (int j = 0; j < t.s; ++j)
            if (bmask >> j & 1) p_B1 += t12[static_cast<std::size_t>(2 * j)];
        double value = p_B1 - p_dd1;
        for (int i = 0; i < t.r; ++i) {
            double p_iB = 0.0;
            for (int j = 0; j < t.s; ++j)
                if (bmask >> j & 1) p_iB += t01[static_cast<std::size_t>(i * t.s + j)];
            const double gain = t02[static_cast<std::size_t>(2 * i)] - p_iB;
            if (gain > 0.0) value += gain;
        }
        best = std::max(best, value);
    }
    return {2.0 * best, inconsistency(seq)};
}

// s = 2 special case: R = 2 max_j { p_.j1 - sum_i min(p_ij., p_i.1) }_+.
inline ClosedFormResult index_r22(const MarginalSequence& seq) {
    using namespace closed_detail;
    const TripleTables t = triple_layout(seq);
    require(t.s == 2, "fast path needs s = 2");
    const auto& t01 = *t.t01;
    const auto& t12 = *t.t12;
    const auto& t02 = *t.t02;

    double best = 0.0;
    for (int j = 0; j < 2; ++j) {
        double value = t12[static_cast<std::size_t>(2 * j)];  // p_.j1
        for (int i = 0; i < t.r; ++i)
            value -= std::min(t01[static_cast<std::size_t>(2 * i + j)],
                              t02[static_cast<std::size_t>(2 * i)]);
        best = std::max(best, value);
    }
    return {2.0 * best, inconsistency(seq)};
}

// Chain {0,1},{1,2},{2,3},{0,3} on r x 2 x 2 x 2:
// R = 2 max_{k,l} { p_..kl - p_.2k. - sum_i min(p_i1.., p_i..l) }_+.
inline ClosedFormResult index_chain4(const MarginalSequence& seq) {
    using namespace closed_detail;
    require(seq.space().dim() == 4, "expected 4 variables");
    for (int v = 1; v < 4; ++v)
        require(seq.space().size(v) == 2, "variables 2..4 must be binary");
    const int r = seq.space().size(0);
    const int i01 = seq.collection().find(Pattern{0, 1});
    const int i12 = seq.collection().find(Pattern{1, 2});
    const int i23 = seq.collection().find(Pattern{2, 3});
    const int i03 = seq.collection().find(Pattern{0, 3});
    require(i01 >= 0 && i12 >= 0 && i23 >= 0 && i03 >= 0 && seq.count() == 4,
            "expected the four chain patterns");
    const auto& t01 = seq.table(i01);
    const auto& t12 = seq.table(i12);
    const auto& t23 = seq.table(i23);
    const auto& t03 = seq.table(i03);

    double best = 0.0;
    for (int k = 0; k < 2; ++k) {
        for (int l = 0; l < 2; ++l) {
            double value = t23[static_cast<std::size_t>(2 * k + l)] -
                           t12[static_cast<std::size_t>(2 * 1 + k)];
            for (int i = 0; i < r; ++i)
                value -= std::min(t01[static_cast<std::size_t>(2 * i)],
                                  t03[static_cast<std::size_t>(2 * i + l)]);
            best = std::max(best, value);
        }
    }
    return {2.0 * best, inconsistency(seq)};
}

// Binary chain, second displayed representation:
// R = 2 max_{i,j,k} (p_ij.. - p_.jk. - p_..k'1 - p_i..2)_+ with k' = 1-k.
// Agrees with index_chain4 on consistent binary inputs.
inline ClosedFormResult index_chain4_facets(const MarginalSequence& seq) {
    using namespace closed_detail;
    require(seq.space().dim() == 4, "expected 4 variables");
    for (int v = 0; v < 4; ++v)
        require(seq.space().size(v) == 2, "all variables must be binary");
    const auto& t01 = seq.table(seq.collection().find(Pattern{0, 1}));
    const auto& t12 = seq.table(seq.collection().find(Pattern{1, 2}));
    const auto& t23 = seq.table(seq.collection().find(Pattern{2, 3}));
    const auto& t03 = seq.table(seq.collection().find(Pattern{0, 3}));

    double best = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                best = std::max(
                    best, t01[static_cast<std::size_t>(2 * i + j)] -
                              t12[static_cast<std::size_t>(2 * j + k)] -
                              t23[static_cast<std::size_t>(2 * (1 - k))] -
                              t03[static_cast<std::size_t>(2 * i + 1)]);
    return {2.0 * best, inconsistency(seq)};
}

namespace closed_detail {

// Triangle sub-sequence on three variables whose three pair tables are
// restrictions of tables in `seq`; result is in canonical triple layout.
inline MarginalSequence triangle(const MarginalSequence& seq,
                                 const std::array<int, 3>& vars) {
    std::vector<int> kept(vars.begin(), vars.end());
    std::sort(kept.begin(), kept.end());
    std::vector<Pattern> req;
    std::vector<int> src;
    const std::array<std::array<int, 2>, 3> edges = {
        {{kept[0], kept[1]}, {kept[1], kept[2]}, {kept[0], kept[2]}}};
    for (const auto& e : edges) {
        Pattern want{e[0], e[1]};
        int found = -1;
        for (int i = 0; i < seq.count(); ++i)
            if (seq.pattern(i).contains(want)) {
                found = i;
                break;
            }
        require(found >= 0, "no pattern covers a triangle edge");
        req.push_back(want);
        src.push_back(found);
    }
    return sub_sequence(seq, kept, req, src);
}

// Conditional sequence given variable `cond_var` = value, over the patterns
// that contain it; weights use each pattern's own marginal at the value.
inline std::optional<MarginalSequence> condition_on(
    const MarginalSequence& seq, int cond_var, int value, double* weight_out) {
    std::vector<int> kept;
    for (int v = 0; v < seq.space().dim(); ++v)
        if (v != cond_var) kept.push_back(v);
    std::vector<Pattern> pats;
    std::vector<std::vector<double>> tabs;
    std::vector<std::int64_t> ns;
    double weight = -1.0;
    for (int i = 0; i < seq.count(); ++i) {
        const Pattern& pat = seq.pattern(i);
        require(pat.contains(cond_var), "conditioning variable not in pattern");
        const auto rest = pat.minus({cond_var});
        require(rest.has_value(), "conditioning would empty a pattern");
        std::vector<double> t(pattern_cells(seq.space(), *rest));
        double total = 0.0;
        for (std::uint64_t c = 0; c < t.size(); ++c) {
            auto vals = decode_cell(seq.space(), *rest, c);
            std::vector<int> full_vals;
            int k = 0;
            for (int v : pat.vars())
                full_vals.push_back(v == cond_var ? value : vals[k++]);
            t[c] = seq.table(i)[encode_cell(seq.space(), pat, full_vals)];
            total += t[c];
        }
        if (weight < 0.0) weight = total;
        if (total <= 1e-12) return std::nullopt;
        for (double& v : t) v /= total;
        pats.push_back(relabel_pattern(*rest, kept));
        tabs.push_back(std::move(t));
        ns.push_back(seq.sample_size(i));
    }
    if (weight_out) *weight_out = weight;
    return MarginalSequence(subspace(seq.space(), kept),
                            PatternCollection(std::move(pats), std::move(ns)),
                            std::move(tabs), seq.is_probability());
}

inline void require_all_binary(const MarginalSequence& seq) {
    for (int v = 0; v < seq.space().dim(); ++v)
        require(seq.space().size(v) == 2, "family needs binary variables");
}

}  // namespace closed_detail

// Binary d = 4 catalog. The pattern layout must already be canonical:
//  - D4AllButOne:    {0,1},{1,2},{0,2},{2,3},{0,3}
//  - D4AllPairs:     all six pairs
//  - D4SingleTriple: {0,1,2},{0,3},{1,3},{2,3}
//  - D4AllTriples:   all four triples
inline ClosedFormResult index_d4(const MarginalSequence& seq, FamilyTag tag) {
    using namespace closed_detail;
    require(seq.space().dim() == 4, "expected 4 variables");
    require_all_binary(seq);
    const double incons = inconsistency(seq);

    auto tri = [&](int a, int b, int c) {
        return index_r22(triangle(seq, {a, b, c})).index;
    };

    switch (tag) {
        case FamilyTag::Chain4:
            return index_chain4(seq);

        case FamilyTag::D4AllButOne: {
            require(seq.count() == 5 &&
                        seq.collection().find(Pattern{1, 3}) < 0 &&
                        seq.collection().find(Pattern{0, 2}) >= 0,
                    "expected all pairs except {2,4}");
            const double r123 = tri(0, 1, 2);
            const double r134 = tri(0, 2, 3);
            std::vector<Pattern> chain_pats = {Pattern{0, 1}, Pattern{1, 2},
                                               Pattern{2, 3}, Pattern{0, 3}};
            std::vector<int> src;
            for (const auto& p : chain_pats) src.push_back(seq.collection().find(p));
            std::vector<int> kept{0, 1, 2, 3};
            const double rchain =
                index_chain4(sub_sequence(seq, kept, chain_pats, src)).index;
            return {std::max({r123, r134, rchain}), incons};
        }

        case FamilyTag::D4AllPairs: {
            require(seq.count() == 6, "expected all six pairs");
            double best = std::max({tri(0, 1, 2), tri(0, 1, 3), tri(0, 2, 3),
                                    tri(1, 2, 3)});

            const auto& t01 = seq.table(seq.collection().find(Pattern{0, 1}));
            const auto& t12 = seq.table(seq.collection().find(Pattern{1, 2}));
            const auto& t02 = seq.table(seq.collection().find(Pattern{0, 2}));
            const auto& t03 = seq.table(seq.collection().find(Pattern{0, 3}));
            const auto& t13 = seq.table(seq.collection().find(Pattern{1, 3}));
            const auto& t23 = seq.table(seq.collection().find(Pattern{2, 3}));
            auto at = [](const std::vector<double>& t, int a, int b) {
                return t[static_cast<std::size_t>(2 * a + b)];
            };
            double p_l[2] = {at(t03, 0, 0) + at(t03, 1, 0),
                             at(t03, 0, 1) + at(t03, 1, 1)};
            // the sixteen facets that are neither triangle nor chain facets;
            // their Minkowski normalization carries unit scale
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k)
                        for (int l = 0; l < 2; ++l)
                            best = std::max(
                                best, -at(t01, i, j) - at(t12, j, k) -
                                          at(t02, i, k) + at(t03, i, l) +
                                          at(t13, j, l) + at(t23, k, l) -
                                          p_l[l]);

            // the three chains obtained by deleting a perfect matching
            const std::array<std::array<int, 4>, 3> cycles = {
                {{0, 1, 2, 3},    // drop {0,2},{1,3}
                 {0, 1, 3, 2},    // drop {0,3},{1,2}
                 {0, 2, 1, 3}}};  // drop {0,1},{2,3}
            for (const auto& cyc : cycles) {
                std::vector<Pattern> pats;
                std::vector<int> src;
                for (int e = 0; e < 4; ++e) {
                    Pattern p{cyc[static_cast<std::size_t>(e)],
                              cyc[static_cast<std::size_t>((e + 1) % 4)]};
                    pats.push_back(p);
                    src.push_back(seq.collection().find(p));
                }
                std::vector<int> old_of_new(cyc.begin(), cyc.end());
                MarginalSequence chain = permute_sequence(
                    sub_sequence(seq, {0, 1, 2, 3}, pats, src), old_of_new);
                best = std::max(best, index_chain4(chain).index);
            }
            return {std::max(best, 0.0), incons};
        }

        case FamilyTag::D4SingleTriple: {
            const int i012 = seq.collection().find(Pattern{0, 1, 2});
            const int i03 = seq.collection().find(Pattern{0, 3});
            const int i13 = seq.collection().find(Pattern{1, 3});
            const int i23 = seq.collection().find(Pattern{2, 3});
            require(i012 >= 0 && i03 >= 0 && i13 >= 0 && i23 >= 0 &&
                        seq.count() == 4,
                    "expected {1,2,3} plus the three pairs with variable 4");
            const auto& t012 = seq.table(i012);
            const auto& t03 = seq.table(i03);
            const auto& t13 = seq.table(i13);
            const auto& t23 = seq.table(i23);
            auto at3 = [&](int i, int j, int k) {
                return t012[static_cast<std::size_t>(4 * i + 2 * j + k)];
            };
            auto at = [](const std::vector<double>& t, int a, int b) {
                return t[static_cast<std::size_t>(2 * a + b)];
            };
            double p_l[2] = {at(t03, 0, 0) + at(t03, 1, 0),
                             at(t03, 0, 1) + at(t03, 1, 1)};
            auto ptilde = [&](int i, int j, int k, int l) {
                return at3(i, j, k) + at(t03, 1 - i, l) + at(t13, 1 - j, l) +
                       at(t23, 1 - k, l) - p_l[l];
            };
            const auto p01 = restrict_table(seq.space(), Pattern{0, 1, 2}, t012,
                                            Pattern{0, 1});
            const auto p12 = restrict_table(seq.space(), Pattern{0, 1, 2}, t012,
                                            Pattern{1, 2});
            const auto p02 = restrict_table(seq.space(), Pattern{0, 1, 2}, t012,
                                            Pattern{0, 2});

            double best = std::max({tri(0, 1, 3), tri(0, 2, 3), tri(1, 2, 3)});
            double min_pt = kInf, min_pair = kInf, min_mixed = kInf;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k)
                        for (int l = 0; l < 2; ++l) {
                            const double pt = ptilde(i, j, k, l);
                            const double ptc = ptilde(1 - i, 1 - j, 1 - k, 1 - l);
                            min_pt = std::min(min_pt, pt);
                            min_pair = std::min(min_pair, pt + ptc);
                            const double inner = std::min(
                                {at(p01, i, j) - at(t03, i, l) + at(t13, 1 - j, l),
                                 at(p12, j, k) - at(t23, k, l) + at(t13, 1 - j, l),
                                 at(p02, i, k) - at(t23, k, l) + at(t03, 1 - i, l)});
                            min_mixed = std::min(min_mixed, ptc + inner);
                        }
            best = std::max({best, -1.5 * min_pt, -min_pair, -min_mixed});
            return {std::max(best, 0.0), incons};
        }

        case FamilyTag::D4AllTriples: {
            require(seq.count() == 4 &&
                        seq.collection().find(Pattern{0, 1, 2}) >= 0 &&
                        seq.collection().find(Pattern{0, 1, 3}) >= 0 &&
                        seq.collection().find(Pattern{0, 2, 3}) >= 0 &&
                        seq.collection().find(Pattern{1, 2, 3}) >= 0,
                    "expected all four triples");
            double best = 0.0;
            for (int J = 0; J < 4; ++J) {
                // keep the three triples containing J, then condition on it
                std::vector<Pattern> pats;
                std::vector<int> src;
                for (int i = 0; i < seq.count(); ++i)
                    if (seq.pattern(i).contains(J)) {
                        pats.push_back(seq.pattern(i));
                        src.push_back(i);
                    }
                MarginalSequence sj =
                    sub_sequence(seq, {0, 1, 2, 3}, pats, src);
                double w[2] = {0.0, 0.0};
                double r[2] = {0.0, 0.0};
                for (int x = 0; x < 2; ++x) {
                    auto slice = condition_on(sj, J, x, &w[x]);
                    r[x] = slice ? index_r22(*slice).index : 0.0;
                }
                for (int x = 0; x < 2; ++x)
                    best = std::max(best,
                                    0.5 * (3.0 * w[x] * r[x] + w[1 - x] * r[1 - x]));
            }
            return {best, incons};
        }

        default:
            throw FamilyError("index_d4 expects a d=4 family tag");
    }
}

// --- family detection -------------------------------------------------------

struct FamilyMatch {
    FamilyTag tag;
    std::vector<int> old_of_new;  // canonicalizing permutation
};

namespace closed_detail {

inline std::optional<std::array<int, 4>> four_cycle(
    const std::vector<Pattern>& pats) {
    if (pats.size() != 4) return std::nullopt;
    std::array<std::vector<int>, 4> adj;
    for (const auto& p : pats) {
        if (p.size() != 2 || p.var(1) > 3) return std::nullopt;
        adj[static_cast<std::size_t>(p.var(0))].push_back(p.var(1));
        adj[static_cast<std::size_t>(p.var(1))].push_back(p.var(0));
    }
    for (const auto& a : adj)
        if (a.size() != 2) return std::nullopt;
    std::array<int, 4> cyc{0, 0, 0, 0};
    cyc[1] = std::min(adj[0][0], adj[0][1]);
    cyc[3] = std::max(adj[0][0], adj[0][1]);
    cyc[2] = adj[static_cast<std::size_t>(cyc[1])][0] == 0
                 ? adj[static_cast<std::size_t>(cyc[1])][1]
                 : adj[static_cast<std::size_t>(cyc[1])][0];
    if (cyc[2] == cyc[3] || cyc[2] == 0) return std::nullopt;
    return cyc;
}

}  // namespace closed_detail

// Structural matcher: recognizes a cataloged family modulo variable
// relabeling and returns the permutation that canonicalizes the sequence.
inline std::optional<FamilyMatch> detect_family(const DiscreteSpace& space,
                                                const PatternCollection& coll) {
    const int d = space.dim();
    auto has = [&](std::initializer_list<int> vars) {
        return coll.find(Pattern(vars)) >= 0;
    };

    if (d == 3 && coll.count() == 3 && has({0, 1}) && has({1, 2}) && has({0, 2})) {
        // role 2 must be binary; prefer the smallest binary variable
        int role2 = -1;
        for (int v = 0; v < 3; ++v)
            if (space.size(v) == 2) {
                role2 = v;
                break;
            }
        if (role2 < 0) return std::nullopt;
        std::vector<int> perm;
        for (int v = 0; v < 3; ++v)
            if (v != role2) perm.push_back(v);
        perm.push_back(role2);
        const FamilyTag tag = space.size(perm[1]) == 2 ? FamilyTag::R22Triple
                                                       : FamilyTag::Rs2Triple;
        return FamilyMatch{tag, perm};
    }

    if (d != 4) return std::nullopt;

    if (auto cyc = closed_detail::four_cycle(coll.patterns)) {
        bool binary_tail = true;
        for (int k = 1; k < 4; ++k)
            binary_tail &= space.size((*cyc)[static_cast<std::size_t>(k)]) == 2;
        if (!binary_tail) {
            // any orientation with three binary variables after the head works
            for (int rot = 0; rot < 4 && !binary_tail; ++rot) {
                std::rotate(cyc->begin(), cyc->begin() + 1, cyc->end());
                binary_tail = space.size((*cyc)[1]) == 2 &&
                              space.size((*cyc)[2]) == 2 &&
                              space.size((*cyc)[3]) == 2;
            }
        }
        if (!binary_tail) return std::nullopt;
        return FamilyMatch{FamilyTag::Chain4,
                           std::vector<int>(cyc->begin(), cyc->end())};
    }

    bool all_binary = true;
    for (int v = 0; v < 4; ++v) all_binary &= space.size(v) == 2;

    if (coll.count() == 6 && all_binary) {
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b)
                if (!has({a, b})) return std::nullopt;
        return FamilyMatch{FamilyTag::D4AllPairs, {0, 1, 2, 3}};
    }

    if (coll.count() == 5 && all_binary) {
        int ma = -1, mb = -1;
        for (int a = 0; a < 4 && ma < 0; ++a)
            for (int b = a + 1; b < 4 && ma < 0; ++b)
                if (!has({a, b})) {
                    ma = a;
                    mb = b;
                }
        if (ma < 0) return std::nullopt;
        for (const auto& p : coll.patterns)
            if (p.size() != 2) return std::nullopt;
        // canonical layout misses {1,3}: send the absent pair there
        std::vector<int> cut;
        for (int v = 0; v < 4; ++v)
            if (v != ma && v != mb) cut.push_back(v);
        return FamilyMatch{FamilyTag::D4AllButOne, {cut[0], ma, cut[1], mb}};
    }

    if (coll.count() == 4 && all_binary) {
        int triples = 0, pairs = 0;
        for (const auto& p : coll.patterns) {
            triples += p.size() == 3;
            pairs += p.size() == 2;
        }
        if (triples == 4) return FamilyMatch{FamilyTag::D4AllTriples, {0, 1, 2, 3}};
        if (triples == 1 && pairs == 3) {
            const Pattern* tri = nullptr;
            for (const auto& p : coll.patterns)
                if (p.size() == 3) tri = &p;
            int hub = 0;
            while (tri->contains(hub)) ++hub;
            for (const auto& p : coll.patterns)
                if (p.size() == 2 && !p.contains(hub)) return std::nullopt;
            std::vector<int> perm(tri->vars());
            perm.push_back(hub);
            return FamilyMatch{FamilyTag::D4SingleTriple, perm};
        }
    }
    return std::nullopt;
}

// Permutes into canonical layout and evaluates the tagged closed form.
inline ClosedFormResult index_closed_form(const MarginalSequence& seq,
                                          const FamilyMatch& match) {
    const MarginalSequence canon = permute_sequence(seq, match.old_of_new);
    switch (match.tag) {
        case FamilyTag::Rs2Triple: return index_rs2(canon);
        case FamilyTag::R22Triple: return index_r22(canon);
        case FamilyTag::Chain4: return index_chain4(canon);
        default: return index_d4(canon, match.tag);
    }
}

}  // namespace mcar
