#pragma once

// Structural reductions on the pattern hypergraph: dropping variables seen
// in only one pattern (index-preserving), conditioning on variables common
// to every pattern (exact in the discrete case when the shared marginals
// agree), and cut-set interval bounds.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcar/lp.hpp"
#include "mcar/model.hpp"

namespace mcar {

struct DropOutcome {
    MarginalSequence seq;
    std::vector<int> kept_vars;             // original labels of surviving vars
    std::vector<std::string> descriptions;  // one line per applied step
    bool changed = false;
};

// Marginalizes away every variable that appears in exactly one pattern and
// removes patterns that end up fully disjoint from the rest. A drop is
// skipped when the shrunken pattern would be contained in another pattern:
// the index identity holds regardless, but the collection would degenerate
// (e.g. {{1,2},{2,3}} stays untouched rather than becoming {{2},{2,3}}).
inline DropOutcome drop_single_pattern_vars(const MarginalSequence& seq) {
    const int d = seq.space().dim();
    std::vector<int> count(static_cast<std::size_t>(d), 0);
    for (int i = 0; i < seq.count(); ++i)
        for (int v : seq.pattern(i).vars()) ++count[static_cast<std::size_t>(v)];

    std::vector<std::vector<int>> drop_of(static_cast<std::size_t>(seq.count()));
    for (int i = 0; i < seq.count(); ++i)
        for (int v : seq.pattern(i).vars())
            if (count[static_cast<std::size_t>(v)] == 1)
                drop_of[static_cast<std::size_t>(i)].push_back(v);

    DropOutcome out{seq, {}, {}, false};
    std::vector<bool> keep_pattern(static_cast<std::size_t>(seq.count()), true);
    std::vector<bool> drop_var(static_cast<std::size_t>(d), false);
    std::vector<Pattern> shapes;  // current shape of each pattern, in order
    for (int i = 0; i < seq.count(); ++i) shapes.push_back(seq.pattern(i));

    int patterns_left = seq.count();
    std::vector<Pattern> new_pats;
    for (int i = 0; i < seq.count(); ++i) {
        auto& dropped = drop_of[static_cast<std::size_t>(i)];
        if (dropped.empty()) {
            new_pats.push_back(seq.pattern(i));
            continue;
        }
        const auto rest = seq.pattern(i).minus(dropped);
        if (!rest) {
            if (patterns_left == 1) {  // never reduce the collection to nothing
                new_pats.push_back(seq.pattern(i));
                dropped.clear();
                continue;
            }
            keep_pattern[static_cast<std::size_t>(i)] = false;
            --patterns_left;
            for (int v : dropped) drop_var[static_cast<std::size_t>(v)] = true;
            out.descriptions.push_back("drop disjoint pattern " +
                                       seq.pattern(i).label());
            continue;
        }
        bool degenerate = false;
        for (int j = 0; j < seq.count() && !degenerate; ++j) {
            if (j == i || !keep_pattern[static_cast<std::size_t>(j)]) continue;
            degenerate = shapes[static_cast<std::size_t>(j)].contains(*rest);
        }
        if (degenerate) {
            new_pats.push_back(seq.pattern(i));
            dropped.clear();
            continue;
        }
        for (int v : dropped) drop_var[static_cast<std::size_t>(v)] = true;
        std::ostringstream os;
        os << "marginalize " << seq.pattern(i).label() << " over {";
        for (std::size_t k = 0; k < dropped.size(); ++k)
            os << (k ? "," : "") << dropped[k] + 1;
        os << "}";
        out.descriptions.push_back(os.str());
        shapes[static_cast<std::size_t>(i)] = *rest;
        new_pats.push_back(*rest);
    }

    bool any = false;
    for (int v = 0; v < d; ++v) any |= drop_var[static_cast<std::size_t>(v)];
    for (bool k : keep_pattern) any |= !k;
    if (!any) return out;

    std::vector<int> kept;
    for (int v = 0; v < d; ++v)
        if (!drop_var[static_cast<std::size_t>(v)]) kept.push_back(v);

    std::vector<Pattern> req;
    std::vector<int> src;
    {
        std::size_t pi = 0;
        for (int i = 0; i < seq.count(); ++i) {
            if (!keep_pattern[static_cast<std::size_t>(i)]) continue;
            req.push_back(new_pats[pi++]);
            src.push_back(i);
        }
        // new_pats holds entries only for kept patterns, in order
    }
    out.seq = sub_sequence(seq, kept, req, src);
    out.kept_vars = kept;
    out.changed = true;
    return out;
}

// Applies drops to a fixpoint; dropping whole patterns can expose nothing
// new, but collisions resolved by an earlier pass may unlock later ones.
inline DropOutcome drop_to_fixpoint(const MarginalSequence& seq) {
    DropOutcome total{seq, {}, {}, false};
    std::vector<int> labels(static_cast<std::size_t>(seq.space().dim()));
    for (std::size_t v = 0; v < labels.size(); ++v)
        labels[v] = static_cast<int>(v);
    for (;;) {
        DropOutcome step = drop_single_pattern_vars(total.seq);
        if (!step.changed) break;
        total.changed = true;
        for (auto& dsc : step.descriptions) total.descriptions.push_back(dsc);
        // compose variable label maps
        std::vector<int> composed;
        for (int v : step.kept_vars)
            composed.push_back(labels[static_cast<std::size_t>(v)]);
        labels = composed;
        total.seq = std::move(step.seq);
    }
    total.kept_vars = labels;
    return total;
}

struct ConditionalSlice {
    std::vector<int> cell;  // values of the conditioning variables (0-based)
    double weight = 0.0;
    MarginalSequence seq;
};

// Common-variable conditioning: requires J = the intersection of every
// pattern to be nonempty and proper, and the J-marginals of all tables to
// agree within tol. Returns one slice per positive-mass cell of J; the index
// of the input is the weight-sum of the slice indices.
inline std::vector<ConditionalSlice> condition_common_vars(
    const MarginalSequence& seq, double tol = 1e-9) {
    std::optional<Pattern> common = seq.pattern(0);
    for (int i = 1; i < seq.count() && common; ++i)
        common = common->intersect(seq.pattern(i));
    if (!common)
        throw DomainError("conditioning needs a variable common to all patterns");
    for (int i = 0; i < seq.count(); ++i)
        if (seq.pattern(i) == *common)
            throw DomainError("conditioning would empty pattern " +
                              seq.pattern(i).label());

    std::vector<std::vector<double>> j_marginals;
    for (int i = 0; i < seq.count(); ++i)
        j_marginals.push_back(
            restrict_table(seq.space(), seq.pattern(i), seq.table(i), *common));
    double discrepancy = 0.0;
    for (std::size_t i = 1; i < j_marginals.size(); ++i)
        discrepancy =
            std::max(discrepancy, tv_distance(j_marginals[0], j_marginals[i]));
    if (discrepancy > tol)
        throw ReductionError("patterns do not share the conditioning marginal "
                             "(max TV " +
                                 std::to_string(discrepancy) + ")",
                             discrepancy);

    std::vector<int> kept;
    for (int v = 0; v < seq.space().dim(); ++v)
        if (!common->contains(v)) kept.push_back(v);

    std::vector<ConditionalSlice> slices;
    const std::uint64_t cells = pattern_cells(seq.space(), *common);
    for (std::uint64_t c = 0; c < cells; ++c) {
        const double weight = j_marginals[0][c];
        if (weight <= 1e-14) continue;
        const auto cvals = decode_cell(seq.space(), *common, c);

        std::vector<Pattern> pats;
        std::vector<std::vector<double>> tabs;
        std::vector<std::int64_t> ns;
        for (int i = 0; i < seq.count(); ++i) {
            const Pattern& pat = seq.pattern(i);
            const auto rest = pat.minus(common->vars());
            std::vector<double> t(pattern_cells(seq.space(), *rest));
            double total = 0.0;
            for (std::uint64_t cc = 0; cc < t.size(); ++cc) {
                const auto rvals = decode_cell(seq.space(), *rest, cc);
                std::vector<int> full(static_cast<std::size_t>(pat.size()));
                int kr = 0;
                for (int k = 0; k < pat.size(); ++k) {
                    const int v = pat.var(k);
                    if (common->contains(v)) {
                        const auto& cv = common->vars();
                        const int pos = static_cast<int>(
                            std::lower_bound(cv.begin(), cv.end(), v) -
                            cv.begin());
                        full[static_cast<std::size_t>(k)] =
                            cvals[static_cast<std::size_t>(pos)];
                    } else {
                        full[static_cast<std::size_t>(k)] =
                            rvals[static_cast<std::size_t>(kr++)];
                    }
                }
                t[cc] = seq.table(i)[encode_cell(seq.space(), pat, full)];
                total += t[cc];
            }
            if (total <= 0.0) total = 1.0;  // zero-mass slice of one table
            for (double& v : t) v /= total;
            pats.push_back(relabel_pattern(*rest, kept));
            tabs.push_back(std::move(t));
            ns.push_back(seq.sample_size(i));
        }
        slices.push_back(
            {cvals, weight,
             MarginalSequence(subspace(seq.space(), kept),
                              PatternCollection(std::move(pats), std::move(ns)),
                              std::move(tabs), seq.is_probability())});
    }
    return slices;
}

struct CutBounds {
    double lower = 0.0;
    double upper = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;
};

// Index bounds from a cut set: patterns split into two groups overlapping
// only in the cut pattern J, with no shared variables outside J.
inline CutBounds cut_set_bounds(const MarginalSequence& seq, const Pattern& cut,
                                const std::vector<int>& side1,
                                const std::vector<int>& side2) {
    const int jc = seq.collection().find(cut);
    if (jc < 0) throw DomainError("cut pattern not in the collection");
    auto in = [](const std::vector<int>& v, int x) {
        return std::find(v.begin(), v.end(), x) != v.end();
    };
    if (!in(side1, jc) || !in(side2, jc))
        throw DomainError("cut pattern must belong to both sides");
    std::vector<bool> seen(static_cast<std::size_t>(seq.count()), false);
    for (int i : side1) seen[static_cast<std::size_t>(i)] = true;
    for (int i : side2) {
        if (seen[static_cast<std::size_t>(i)] && i != jc)
            throw DomainError("sides may share only the cut pattern");
        seen[static_cast<std::size_t>(i)] = true;
    }
    for (bool s : seen)
        if (!s) throw DomainError("sides must cover the collection");

    auto union_vars = [&](const std::vector<int>& side) {
        std::vector<bool> mask(static_cast<std::size_t>(seq.space().dim()), false);
        for (int i : side)
            for (int v : seq.pattern(i).vars())
                mask[static_cast<std::size_t>(v)] = true;
        return mask;
    };
    const auto u1 = union_vars(side1);
    const auto u2 = union_vars(side2);
    for (int v = 0; v < seq.space().dim(); ++v) {
        const bool both = u1[static_cast<std::size_t>(v)] &&
                          u2[static_cast<std::size_t>(v)];
        if (both != cut.contains(v))
            throw DomainError("sides share variables outside the cut pattern");
    }

    auto side_index = [&](const std::vector<int>& side) {
        std::vector<int> kept;
        for (int v = 0; v < seq.space().dim(); ++v) {
            bool used = false;
            for (int i : side) used |= seq.pattern(i).contains(v);
            if (used) kept.push_back(v);
        }
        std::vector<Pattern> req;
        std::vector<int> src;
        for (int i : side) {
            req.push_back(seq.pattern(i));
            src.push_back(i);
        }
        return incompatibility_index(sub_sequence(seq, kept, req, src)).index;
    };

    CutBounds out;
    out.r1 = side_index(side1);
    out.r2 = side_index(side2);
    out.lower = std::max(out.r1, out.r2);
    out.upper = std::min(1.0, out.r1 + out.r2);
    return out;
}

struct CutProposal {
    Pattern cut{0};
    std::vector<int> side1, side2;
};

// First pattern (in collection order) whose removal disconnects the
// remaining patterns on their non-cut variables.
inline std::optional<CutProposal> find_cut_set(const DiscreteSpace& /*space*/,
                                               const PatternCollection& coll) {
    const int n = coll.count();
    if (n < 3) return std::nullopt;
    for (int jc = 0; jc < n; ++jc) {
        const Pattern& cut = coll.patterns[static_cast<std::size_t>(jc)];
        // union-find over the other patterns, linked by shared non-cut vars
        std::vector<int> parent(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
        std::function<int(int)> find = [&](int x) {
            while (parent[static_cast<std::size_t>(x)] != x)
                x = parent[static_cast<std::size_t>(x)] =
                    parent[static_cast<std::size_t>(
                        parent[static_cast<std::size_t>(x)])];
            return x;
        };
        for (int i = 0; i < n; ++i) {
            if (i == jc) continue;
            for (int j = i + 1; j < n; ++j) {
                if (j == jc) continue;
                const auto ov = coll.patterns[static_cast<std::size_t>(i)]
                                    .intersect(
                                        coll.patterns[static_cast<std::size_t>(j)]);
                if (!ov) continue;
                bool outside = false;
                for (int v : ov->vars()) outside |= !cut.contains(v);
                if (outside) parent[static_cast<std::size_t>(find(i))] = find(j);
            }
        }
        int root = -1;
        bool split = false;
        for (int i = 0; i < n && !split; ++i) {
            if (i == jc) continue;
            if (root < 0) root = find(i);
            else split = find(i) != root;
        }
        if (!split) continue;
        CutProposal out;
        out.cut = cut;
        out.side1.push_back(jc);
        out.side2.push_back(jc);
        for (int i = 0; i < n; ++i) {
            if (i == jc) continue;
            (find(i) == root ? out.side1 : out.side2).push_back(i);
        }
        std::sort(out.side1.begin(), out.side1.end());
        std::sort(out.side2.begin(), out.side2.end());
        return out;
    }
    return std::nullopt;
}

struct ReductionPlan {
    std::vector<std::string> drop_steps;
    std::vector<int> kept_vars;  // original labels after drops
    bool condition_applicable = false;
    std::vector<int> condition_vars;  // original labels
    std::optional<CutProposal> cut;   // indices into the reduced collection
    bool trivial = false;             // single pattern: index is zero
};

// Deterministic plan: drops to a fixpoint, then condition/cut proposals on
// the reduced collection (predicates on the patterns only; the conditioning
// marginal check happens at apply time).
inline ReductionPlan plan_reductions(const MarginalSequence& seq) {
    ReductionPlan plan;
    const DropOutcome drops = drop_to_fixpoint(seq);
    plan.drop_steps = drops.descriptions;
    plan.kept_vars = drops.kept_vars;
    if (drops.seq.count() <= 1) {
        plan.trivial = true;
        return plan;
    }
    std::optional<Pattern> common = drops.seq.pattern(0);
    for (int i = 1; i < drops.seq.count() && common; ++i)
        common = common->intersect(drops.seq.pattern(i));
    if (common) {
        bool proper = true;
        for (int i = 0; i < drops.seq.count(); ++i)
            proper &= !(drops.seq.pattern(i) == *common);
        if (proper) {
            plan.condition_applicable = true;
            for (int v : common->vars())
                plan.condition_vars.push_back(
                    drops.kept_vars[static_cast<std::size_t>(v)]);
        }
    }
    plan.cut = find_cut_set(drops.seq.space(), drops.seq.collection());
    return plan;
}

}  // namespace mcar
