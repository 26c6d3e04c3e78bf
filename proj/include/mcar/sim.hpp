#pragma once

// Simulation-study families and the random-instance generators used by the
// oracle suites. The power-study harness lives at the bottom of the header.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mcar/closedform.hpp"
#include "mcar/infer.hpp"
#include "mcar/lp.hpp"
#include "mcar/model.hpp"
#include "mcar/rng.hpp"

namespace mcar {

// Three-pattern family on [r] x [2] x [2] with p_i.. = 1/r,
// p_.1. = p_..1 = 1/2, p_i.1 = 1/(2r), p_i1. = (1 + (-1)^i)/(2r) and the
// {2,3} table parameterized by p_.21. Within p_dot21 in [1/4, 1/2] the
// family is consistent with R = 2 (p_dot21 - 1/4).
inline MarginalSequence build_sim_family_rs2(int r, double p_dot21) {
    if (r < 2 || r % 2 != 0)
        throw DomainError("family needs even r (odd r breaks the X2 margin)");
    if (p_dot21 < 0.25 - 1e-12 || p_dot21 > 0.5 + 1e-12)
        throw DomainError("p_dot21 must lie in [1/4, 1/2]");
    DiscreteSpace space({r, 2, 2});
    PatternCollection coll({Pattern{0, 1}, Pattern{1, 2}, Pattern{0, 2}});

    std::vector<double> t01(static_cast<std::size_t>(2 * r));
    std::vector<double> t02(static_cast<std::size_t>(2 * r));
    for (int i = 0; i < r; ++i) {
        const double sign = (i % 2 == 0) ? -1.0 : 1.0;  // (-1)^i with 1-based i
        t01[static_cast<std::size_t>(2 * i)] = (1.0 + sign) / (2.0 * r);
        t01[static_cast<std::size_t>(2 * i + 1)] = (1.0 - sign) / (2.0 * r);
        t02[static_cast<std::size_t>(2 * i)] = 1.0 / (2.0 * r);
        t02[static_cast<std::size_t>(2 * i + 1)] = 1.0 / (2.0 * r);
    }
    std::vector<double> t12{0.5 - p_dot21, p_dot21, p_dot21, 0.5 - p_dot21};
    return MarginalSequence(space, coll, {t01, t12, t02});
}

inline double sim_family_rs2_index(double p_dot21) {
    return 2.0 * std::max(0.0, p_dot21 - 0.25);
}

// Five four-variable margins of [2]^5 with alternating-parity perturbations;
// R = (5 eps - 1)_+ / 4 on the displayed range.
inline MarginalSequence build_sim_family_d5(double eps,
                                            std::vector<std::string>* warnings =
                                                nullptr) {
    if (std::abs(eps) > 1.0)
        throw DomainError("eps beyond [-1,1] produces negative mass");
    if ((eps < 0.2 || eps > 0.35) && warnings)
        warnings->push_back("eps outside the studied range [0.2, 0.35]");
    DiscreteSpace space({2, 2, 2, 2, 2});
    std::vector<Pattern> pats = {Pattern{0, 1, 2, 3}, Pattern{0, 1, 2, 4},
                                 Pattern{0, 1, 3, 4}, Pattern{0, 2, 3, 4},
                                 Pattern{1, 2, 3, 4}};
    std::vector<std::vector<double>> tabs;
    for (std::size_t t = 0; t < pats.size(); ++t) {
        const double sign = (t == 4) ? -1.0 : 1.0;
        std::vector<double> tab(16);
        for (int c = 0; c < 16; ++c) {
            const int parity = std::popcount(static_cast<unsigned>(c)) % 2;
            const double par = parity ? -1.0 : 1.0;
            tab[static_cast<std::size_t>(c)] = (1.0 + sign * eps * par) / 16.0;
        }
        tabs.push_back(std::move(tab));
    }
    return MarginalSequence(space, PatternCollection(std::move(pats)),
                            std::move(tabs));
}

inline double sim_family_d5_index(double eps) {
    return std::max(0.0, 5.0 * eps - 1.0) / 4.0;
}

// --- random instances -------------------------------------------------------

// A p for a Dirichlet(1) joint p: compatible (R = 0) and consistent.
inline MarginalSequence random_compatible(const DiscreteSpace& space,
                                          const PatternCollection& coll,
                                          Rng& rng) {
    MarginalOperator op(space, coll);
    std::vector<double> joint(op.cols());
    double total = 0.0;
    for (double& v : joint) {
        v = -std::log(1.0 - rng.next_double());
        total += v;
    }
    for (double& v : joint) v /= total;
    const auto stacked = op.apply(joint);
    std::vector<std::vector<double>> tables;
    for (int s = 0; s < coll.count(); ++s) {
        const auto lo = op.row_offset(s), hi = op.row_offset(s + 1);
        std::vector<double> t(stacked.begin() + static_cast<std::ptrdiff_t>(lo),
                              stacked.begin() + static_cast<std::ptrdiff_t>(hi));
        double sum = 0.0;
        for (double v : t) sum += v;
        for (double& v : t) v /= sum;
        tables.push_back(std::move(t));
    }
    return MarginalSequence(space, coll, std::move(tables));
}

inline MarginalSequence random_compatible(const DiscreteSpace& space,
                                          const PatternCollection& coll,
                                          std::uint64_t seed) {
    Rng rng(seed);
    return random_compatible(space, coll, rng);
}

namespace sim_detail {

// Zeroes every one-variable margin of a pattern-shaped array in place.
inline void center_all_axes(const DiscreteSpace& space, const Pattern& pat,
                            std::vector<double>& t) {
    const std::uint64_t cells = t.size();
    for (int k = 0; k < pat.size(); ++k) {
        const int m = space.size(pat.var(k));
        std::vector<double> margin(static_cast<std::size_t>(m), 0.0);
        std::vector<int> vals;
        for (std::uint64_t c = 0; c < cells; ++c)
            margin[static_cast<std::size_t>(
                decode_cell(space, pat, c)[static_cast<std::size_t>(k)])] += t[c];
        const double denom = static_cast<double>(cells) / m;
        for (std::uint64_t c = 0; c < cells; ++c)
            t[c] -= margin[static_cast<std::size_t>(
                        decode_cell(space, pat, c)[static_cast<std::size_t>(k)])] /
                    denom;
    }
}

inline bool overlaps_are_singletons(const PatternCollection& coll) {
    for (int i = 0; i < coll.count(); ++i)
        for (int j = i + 1; j < coll.count(); ++j) {
            const auto t = coll.patterns[static_cast<std::size_t>(i)].intersect(
                coll.patterns[static_cast<std::size_t>(j)]);
            if (t && t->size() > 1) return false;
        }
    return true;
}

// Consistent sequence with common single-variable margins q_v and a random
// zero-margin perturbation per table. Requires singleton overlaps, which is
// exactly when matching 1-d margins is all of consistency.
inline MarginalSequence shared_margin_noise(const DiscreteSpace& space,
                                            const PatternCollection& coll,
                                            Rng& rng) {
    std::vector<std::vector<double>> q(static_cast<std::size_t>(space.dim()));
    for (int v = 0; v < space.dim(); ++v) {
        auto& qv = q[static_cast<std::size_t>(v)];
        qv.resize(static_cast<std::size_t>(space.size(v)));
        double sum = 0.0;
        for (double& x : qv) {
            x = 0.2 + rng.next_double();
            sum += x;
        }
        for (double& x : qv) x /= sum;
    }
    std::vector<std::vector<double>> tables;
    for (const auto& pat : coll.patterns) {
        std::vector<double> prod(pattern_cells(space, pat));
        for (std::uint64_t c = 0; c < prod.size(); ++c) {
            const auto vals = decode_cell(space, pat, c);
            double x = 1.0;
            for (int k = 0; k < pat.size(); ++k)
                x *= q[static_cast<std::size_t>(pat.var(k))]
                      [static_cast<std::size_t>(vals[static_cast<std::size_t>(k)])];
            prod[c] = x;
        }
        std::vector<double> noise(prod.size());
        for (double& x : noise) x = rng.next_double() - 0.5;
        center_all_axes(space, pat, noise);
        double lambda_max = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < prod.size(); ++c)
            if (noise[c] < 0.0) lambda_max = std::min(lambda_max, -prod[c] / noise[c]);
        const double lambda =
            std::isfinite(lambda_max) ? 0.9 * rng.next_double() * lambda_max : 0.0;
        double sum = 0.0;
        for (std::size_t c = 0; c < prod.size(); ++c) {
            prod[c] = std::max(0.0, prod[c] + lambda * noise[c]);
            sum += prod[c];
        }
        for (double& x : prod) x /= sum;
        tables.push_back(std::move(prod));
    }
    return MarginalSequence(space, coll, std::move(tables));
}

inline std::vector<double> corr_pair() { return {0.5, 0.0, 0.0, 0.5}; }
inline std::vector<double> anti_pair() { return {0.0, 0.5, 0.5, 0.0}; }
inline std::vector<double> uniform_table(std::uint64_t cells) {
    return std::vector<double>(cells, 1.0 / static_cast<double>(cells));
}

// Even-parity triple: mass 1/4 on cells with even coordinate sum.
inline std::vector<double> parity_triple(double eps, double sign) {
    std::vector<double> t(8);
    for (int c = 0; c < 8; ++c) {
        const double par =
            (std::popcount(static_cast<unsigned>(c)) % 2) ? -1.0 : 1.0;
        t[static_cast<std::size_t>(c)] = (1.0 + sign * eps * par) / 8.0;
    }
    return t;
}

// A consistent, maximally incompatible companion for each cataloged family,
// expressed in the family's canonical variable layout.
inline std::optional<MarginalSequence> structured_incompatible(
    const DiscreteSpace& space, const PatternCollection& coll, Rng& rng) {
    const auto match = detect_family(space, coll);
    if (!match) return std::nullopt;
    for (int v = 0; v < space.dim(); ++v)
        if (space.size(v) < 2) return std::nullopt;  // no corner to embed into

    // canonical space/collection
    DiscreteSpace cspace = [&] {
        std::vector<int> sizes;
        for (int v : match->old_of_new) sizes.push_back(space.size(v));
        return DiscreteSpace(sizes);
    }();
    auto embed_pair = [&](int a, int b, const std::vector<double>& corner) {
        // corner is a 2x2 block placed on categories {0,1} of (a, b)
        std::vector<double> t(
            pattern_cells(cspace, Pattern{a, b}), 0.0);
        const int mb = cspace.size(b);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                t[static_cast<std::size_t>(i * mb + j)] =
                    corner[static_cast<std::size_t>(2 * i + j)];
        return t;
    };

    std::vector<Pattern> pats;
    std::vector<std::vector<double>> tabs;
    switch (match->tag) {
        case FamilyTag::Rs2Triple:
        case FamilyTag::R22Triple:
            pats = {Pattern{0, 1}, Pattern{1, 2}, Pattern{0, 2}};
            tabs = {embed_pair(0, 1, corr_pair()), embed_pair(1, 2, corr_pair()),
                    embed_pair(0, 2, anti_pair())};
            break;
        case FamilyTag::Chain4:
            pats = {Pattern{0, 1}, Pattern{1, 2}, Pattern{2, 3}, Pattern{0, 3}};
            tabs = {embed_pair(0, 1, corr_pair()), embed_pair(1, 2, corr_pair()),
                    embed_pair(2, 3, corr_pair()), embed_pair(0, 3, anti_pair())};
            break;
        case FamilyTag::D4AllButOne:
            pats = {Pattern{0, 1}, Pattern{1, 2}, Pattern{0, 2}, Pattern{2, 3},
                    Pattern{0, 3}};
            tabs = {corr_pair(), corr_pair(), anti_pair(), uniform_table(4),
                    uniform_table(4)};
            break;
        case FamilyTag::D4AllPairs:
            pats = {Pattern{0, 1}, Pattern{0, 2}, Pattern{0, 3}, Pattern{1, 2},
                    Pattern{1, 3}, Pattern{2, 3}};
            tabs = {corr_pair(), anti_pair(), uniform_table(4), corr_pair(),
                    uniform_table(4), uniform_table(4)};
            break;
        case FamilyTag::D4SingleTriple: {
            const double eps = 0.5 + 0.5 * rng.next_double();
            pats = {Pattern{0, 1, 2}, Pattern{0, 3}, Pattern{1, 3}, Pattern{2, 3}};
            tabs = {parity_triple(eps, 1.0), corr_pair(), corr_pair(),
                    corr_pair()};
            break;
        }
        case FamilyTag::D4AllTriples: {
            const double eps = 0.5 + 0.5 * rng.next_double();
            pats = {Pattern{0, 1, 2}, Pattern{0, 1, 3}, Pattern{0, 2, 3},
                    Pattern{1, 2, 3}};
            tabs = {parity_triple(eps, 1.0), parity_triple(eps, 1.0),
                    parity_triple(eps, 1.0), parity_triple(eps, -1.0)};
            break;
        }
    }
    MarginalSequence canon(cspace, PatternCollection(std::move(pats)),
                           std::move(tabs));
    // undo the canonicalizing permutation
    std::vector<int> inverse(match->old_of_new.size());
    for (std::size_t v = 0; v < inverse.size(); ++v)
        inverse[static_cast<std::size_t>(
            match->old_of_new[v])] = static_cast<int>(v);
    MarginalSequence back = permute_sequence(canon, inverse);
    // align table order with the caller's collection
    std::vector<std::vector<double>> aligned;
    for (const auto& p : coll.patterns) {
        const int i = back.collection().find(p);
        if (i < 0) return std::nullopt;
        aligned.push_back(back.table(i));
    }
    return MarginalSequence(space, coll, std::move(aligned));
}

}  // namespace sim_detail

// Random consistent sequence: a Dirichlet-weighted mixture of a compatible
// part, a structured incompatible part (when the family is recognized) and a
// shared-margin noise part (when overlaps are singletons). Every component
// is consistent, hence so is the mixture.
inline MarginalSequence random_consistent(const DiscreteSpace& space,
                                          const PatternCollection& coll,
                                          Rng& rng) {
    std::vector<MarginalSequence> parts;
    parts.push_back(random_compatible(space, coll, rng));
    if (auto inc = sim_detail::structured_incompatible(space, coll, rng))
        parts.push_back(std::move(*inc));
    if (sim_detail::overlaps_are_singletons(coll))
        parts.push_back(sim_detail::shared_margin_noise(space, coll, rng));
    else
        parts.push_back(random_compatible(space, coll, rng));

    std::vector<double> w(parts.size());
    double total = 0.0;
    for (double& x : w) {
        x = -std::log(1.0 - rng.next_double());
        total += x;
    }
    for (double& x : w) x /= total;

    std::vector<std::vector<double>> tables;
    for (int s = 0; s < coll.count(); ++s) {
        std::vector<double> t(parts[0].table(s).size(), 0.0);
        for (std::size_t k = 0; k < parts.size(); ++k)
            for (std::size_t c = 0; c < t.size(); ++c)
                t[c] += w[k] * parts[k].table(s)[c];
        double sum = 0.0;
        for (double v : t) sum += v;
        for (double& v : t) v /= sum;
        tables.push_back(std::move(t));
    }
    return MarginalSequence(space, coll, std::move(tables));
}

inline MarginalSequence random_consistent(const DiscreteSpace& space,
                                          const PatternCollection& coll,
                                          std::uint64_t seed) {
    Rng rng(seed);
    return random_consistent(space, coll, rng);
}

// --- power studies ----------------------------------------------------------

struct StudyConfig {
    enum class Family { Rs2, D5 };
    enum class Method { Bootstrap, Universal, Improved };

    Family family = Family::Rs2;
    Method method = Method::Bootstrap;
    int r = 2;                       // rs2 alphabet size (even)
    std::vector<double> grid;        // p_dot21 values, or eps for the d5 family
    std::vector<std::int64_t> n_s;   // one sample size per pattern
    int bootstrap_b = 99;
    double alpha = 0.05;
    int replications = 5000;
    std::uint64_t seed = 1;
    int threads = 0;

    static StudyConfig rs2_defaults(int r = 2) {
        StudyConfig cfg;
        cfg.family = Family::Rs2;
        cfg.r = r;
        for (int k = 0; k <= 10; ++k) cfg.grid.push_back(0.25 + 0.025 * k);
        cfg.n_s = {200, 200, 200};
        return cfg;
    }
    static StudyConfig d5_defaults() {
        StudyConfig cfg;
        cfg.family = Family::D5;
        cfg.grid = {0.2, 0.25, 0.3, 0.35};
        cfg.n_s = {500, 500, 500, 500, 500};
        return cfg;
    }
};

struct StudyRow {
    double parameter = 0.0;
    double r_true = 0.0;
    int replications = 0;
    int rejections = 0;
    double rate = 0.0;
    double se3 = 0.0;  // reported in the CSV "se" column: three standard errors
};

// Empirical sequence from n_S multinomial draws per pattern.
inline MarginalSequence sample_empirical(const MarginalSequence& truth,
                                         const std::vector<std::int64_t>& n_S,
                                         Rng& rng) {
    std::vector<std::vector<double>> tables;
    for (int s = 0; s < truth.count(); ++s) {
        const auto counts = sample_counts(truth.table(s), n_S[static_cast<
                                              std::size_t>(s)], rng);
        std::vector<double> t(counts.size());
        for (std::size_t c = 0; c < counts.size(); ++c)
            t[c] = static_cast<double>(counts[c]) /
                   static_cast<double>(n_S[static_cast<std::size_t>(s)]);
        tables.push_back(std::move(t));
    }
    return MarginalSequence(truth.space(),
                            PatternCollection(truth.collection().patterns, n_S),
                            std::move(tables));
}

// One grid point: replicated dataset simulation + test, parallel over
// replicates with per-replicate seed streams, so the outcome is identical
// for any thread count.
inline StudyRow run_study_point(const StudyConfig& cfg, double parameter) {
    MarginalSequence truth = cfg.family == StudyConfig::Family::Rs2
                                 ? build_sim_family_rs2(cfg.r, parameter)
                                 : build_sim_family_d5(parameter);
    const double r_true = cfg.family == StudyConfig::Family::Rs2
                              ? sim_family_rs2_index(parameter)
                              : sim_family_d5_index(parameter);
    if (static_cast<int>(cfg.n_s.size()) != truth.count())
        throw DomainError("study needs one sample size per pattern");
    // the generated family must reproduce its analytic index
    {
        const double lp = incompatibility_index(truth).index;
        if (std::abs(lp - r_true) > 1e-9)
            throw SolverError("family self-check failed: LP " +
                              std::to_string(lp) + " vs analytic " +
                              std::to_string(r_true));
    }

    const std::uint64_t point_seed =
        derive_seed(cfg.seed, static_cast<std::uint64_t>(
                                  parameter * 1e6 + 0.5));
    std::vector<char> rejected(static_cast<std::size_t>(cfg.replications), 0);
    int n_threads = cfg.threads > 0
                        ? cfg.threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, cfg.replications));

    auto worker = [&](int offset) {
        for (int rep = offset; rep < cfg.replications; rep += n_threads) {
            const std::uint64_t rep_seed =
                derive_seed(point_seed, static_cast<std::uint64_t>(rep));
            Rng rng(derive_seed(rep_seed, 0));
            const auto emp = sample_empirical(truth, cfg.n_s, rng);
            bool reject = false;
            switch (cfg.method) {
                case StudyConfig::Method::Bootstrap: {
                    BootstrapOptions opt;
                    opt.alpha = cfg.alpha;
                    opt.replicates = cfg.bootstrap_b;
                    opt.seed = derive_seed(rep_seed, 1);
                    opt.threads = 1;  // parallelism lives at this level
                    reject = bootstrap_test(emp, opt).reject;
                    break;
                }
                case StudyConfig::Method::Universal:
                    reject = universal_test(emp, cfg.alpha).reject;
                    break;
                case StudyConfig::Method::Improved:
                    reject = improved_test(emp, cfg.alpha).reject;
                    break;
            }
            rejected[static_cast<std::size_t>(rep)] = reject ? 1 : 0;
        }
    };
    if (n_threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker, k);
        for (auto& t : pool) t.join();
    }

    StudyRow row;
    row.parameter = parameter;
    row.r_true = r_true;
    row.replications = cfg.replications;
    for (char r : rejected) row.rejections += r;
    row.rate = static_cast<double>(row.rejections) /
               static_cast<double>(cfg.replications);
    row.se3 = 3.0 * std::sqrt(row.rate * (1.0 - row.rate) /
                              static_cast<double>(cfg.replications));
    return row;
}

inline std::vector<StudyRow> run_power_study(const StudyConfig& cfg) {
    if (cfg.replications < 1) throw DomainError("study needs replications >= 1");
    if (cfg.grid.empty()) throw DomainError("study grid is empty");
    std::vector<StudyRow> rows;
    for (double parameter : cfg.grid)
        rows.push_back(run_study_point(cfg, parameter));
    return rows;
}

inline void write_study_csv(std::ostream& out,
                            const std::vector<StudyRow>& rows) {
    out << "parameter,R_true,reps,rejections,rate,se\n";
    out.precision(12);
    for (const auto& r : rows)
        out << r.parameter << ',' << r.r_true << ',' << r.replications << ','
            << r.rejections << ',' << r.rate << ',' << r.se3 << '\n';
}

}  // namespace mcar
