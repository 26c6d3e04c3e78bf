#pragma once

// Exact-rational computational geometry for small instances: H/V forms of
// the marginal polytope and the consistent polytope, double-description
// conversion, and essential-facet extraction for the Minkowski sum
// P^{0,*} + P^{cons,**}. Everything here is exact; floating point appears
// only in the derived facet functionals handed to the statistical layer.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mcar/lp.hpp"
#include "mcar/model.hpp"

namespace mcar {

using Rational = boost::multiprecision::cpp_rational;
using RationalVec = std::vector<Rational>;
using RationalMat = std::vector<RationalVec>;

// Abort double description beyond this many simultaneous rays.
constexpr std::size_t kRayLimit = 100000;

// H-form rows are a'x >= b (inequalities) and a'x = b (equalities);
// V-form is a convex hull of vertices plus conic hull of rays.
struct HForm {
    RationalMat ineq_a;
    RationalVec ineq_b;
    RationalMat eq_a;
    RationalVec eq_b;
};

struct VForm {
    RationalMat vertices;
    RationalMat rays;
};

struct Polyhedron {
    int dim = 0;
    std::optional<HForm> h;
    std::optional<VForm> v;
};

namespace geom_detail {

inline Rational dot(const RationalVec& a, const RationalVec& b) {
    Rational s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Reduced-row-echelon accumulator over the rationals: membership tests and
// rank-increasing insertion.
class Rref {
  public:
    // fully reduces v against the stored rows
    RationalVec reduce(RationalVec v) const {
        for (const auto& [col, row] : rows_) {
            const Rational f = v[col];
            if (f == 0) continue;
            for (std::size_t k = 0; k < v.size(); ++k) v[k] -= f * row[k];
        }
        return v;
    }

    // returns true (and stores the row) when v is outside the current span
    bool insert(const RationalVec& v) {
        RationalVec r = reduce(v);
        std::size_t lead = 0;
        while (lead < r.size() && r[lead] == 0) ++lead;
        if (lead == r.size()) return false;
        const Rational piv = r[lead];
        for (auto& x : r) x /= piv;
        for (auto& [col, row] : rows_) {
            const Rational f = row[lead];
            if (f == 0) continue;
            for (std::size_t k = 0; k < row.size(); ++k) row[k] -= f * r[k];
        }
        rows_.emplace(lead, std::move(r));
        return true;
    }

    std::size_t rank() const { return rows_.size(); }

  private:
    std::map<std::size_t, RationalVec> rows_;  // pivot column -> row
};

// Scales to a primitive integer vector, preserving direction.
inline void normalize_ray(RationalVec& v) {
    boost::multiprecision::cpp_int lcm_den = 1, gcd_num = 0;
    for (const auto& x : v)
        if (x != 0) lcm_den = lcm(lcm_den, denominator(x));
    for (auto& x : v) {
        x *= lcm_den;
        if (x != 0) gcd_num = gcd(gcd_num, numerator(x));
    }
    if (gcd_num != 0)
        for (auto& x : v) x /= Rational(gcd_num);
}

// extreme rays + lineality basis of {y : ineq y >= 0, eq y = 0}
class DoubleDescription {
  public:
    explicit DoubleDescription(int dim) : dim_(dim) {
        lineality_.resize(static_cast<std::size_t>(dim));
        for (int i = 0; i < dim; ++i) {
            lineality_[static_cast<std::size_t>(i)].assign(
                static_cast<std::size_t>(dim), 0);
            lineality_[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1;
        }
    }

    void add_equality(const RationalVec& m) { add_row(m, true); }
    void add_inequality(const RationalVec& m) { add_row(m, false); }

    const RationalMat& rays() const { return ray_vec_; }
    const RationalMat& lineality() const { return lineality_; }

  private:
    struct RayInfo {
        std::vector<std::uint64_t> zero;  // bitset over processed inequalities
    };

    void set_bit(std::vector<std::uint64_t>& bits, std::size_t i) {
        const std::size_t w = i / 64;
        if (bits.size() <= w) bits.resize(w + 1, 0);
        bits[w] |= std::uint64_t{1} << (i % 64);
    }

    static std::vector<std::uint64_t> bits_and(const std::vector<std::uint64_t>& a,
                                               const std::vector<std::uint64_t>& b) {
        std::vector<std::uint64_t> out(std::min(a.size(), b.size()));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] & b[i];
        return out;
    }

    static bool bits_subset(const std::vector<std::uint64_t>& a,
                            const std::vector<std::uint64_t>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::uint64_t bw = i < b.size() ? b[i] : 0;
            if ((a[i] & ~bw) != 0) return false;
        }
        return true;
    }

    void add_row(const RationalVec& m, bool equality) {
        // lineality absorption: a lineality vector off the hyperplane either
        // dies (equality) or becomes a ray (inequality)
        int pivot = -1;
        for (std::size_t i = 0; i < lineality_.size(); ++i)
            if (dot(m, lineality_[i]) != 0) {
                pivot = static_cast<int>(i);
                break;
            }
        if (pivot >= 0) {
            RationalVec l0 = lineality_[static_cast<std::size_t>(pivot)];
            lineality_.erase(lineality_.begin() + pivot);
            Rational d0 = dot(m, l0);
            if (!equality && d0 < 0) {
                for (auto& x : l0) x = -x;
                d0 = -d0;
            }
            for (auto& l : lineality_) {
                const Rational d = dot(m, l);
                if (d == 0) continue;
                for (std::size_t k = 0; k < l.size(); ++k)
                    l[k] -= d / d0 * l0[k];
            }
            for (auto& r : ray_vec_) {
                const Rational d = dot(m, r);
                if (d == 0) continue;
                for (std::size_t k = 0; k < r.size(); ++k)
                    r[k] -= d / d0 * l0[k];
                normalize_ray(r);
            }
            if (!equality) {
                const std::size_t cur = n_ineq_++;
                // every adjusted ray is tight at the new row; l0 is not
                for (auto& info : ray_info_) set_bit(info.zero, cur);
                normalize_ray(l0);
                ray_vec_.push_back(std::move(l0));
                ray_info_.push_back({});
                auto& bits = ray_info_.back().zero;
                for (std::size_t i = 0; i < cur; ++i) set_bit(bits, i);
            }
            return;
        }

        if (equality) {
            // no lineality direction available: cut with both halfspaces
            RationalVec neg(m.size());
            for (std::size_t i = 0; i < m.size(); ++i) neg[i] = -m[i];
            cut(m);
            cut(neg);
            return;
        }
        cut(m);
    }

    // standard DD step for one inequality over the current ray list
    void cut(const RationalVec& m) {
        const std::size_t cur = n_ineq_++;
        std::vector<Rational> val(ray_vec_.size());
        std::vector<int> sign(ray_vec_.size());
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < ray_vec_.size(); ++i) {
            val[i] = dot(m, ray_vec_[i]);
            sign[i] = val[i] > 0 ? 1 : (val[i] < 0 ? -1 : 0);
            if (sign[i] > 0) pos.push_back(i);
            if (sign[i] < 0) neg.push_back(i);
            if (sign[i] == 0) set_bit(ray_info_[i].zero, cur);
        }
        if (neg.empty()) return;

        RationalMat new_rays;
        std::vector<RayInfo> new_info;
        for (std::size_t p : pos) {
            for (std::size_t n : neg) {
                auto common = bits_and(ray_info_[p].zero, ray_info_[n].zero);
                // adjacency: no third ray's zero set contains the common set
                bool adjacent = true;
                for (std::size_t k = 0; k < ray_vec_.size() && adjacent; ++k) {
                    if (k == p || k == n) continue;
                    if (bits_subset(common, ray_info_[k].zero)) adjacent = false;
                }
                if (!adjacent) continue;
                RationalVec r(ray_vec_[p].size());
                for (std::size_t k = 0; k < r.size(); ++k)
                    r[k] = val[p] * ray_vec_[n][k] - val[n] * ray_vec_[p][k];
                normalize_ray(r);
                RayInfo info;
                info.zero = common;
                set_bit(info.zero, cur);
                new_rays.push_back(std::move(r));
                new_info.push_back(std::move(info));
            }
        }
        // drop the negative side
        RationalMat kept;
        std::vector<RayInfo> kept_info;
        for (std::size_t i = 0; i < ray_vec_.size(); ++i)
            if (sign[i] >= 0) {
                kept.push_back(std::move(ray_vec_[i]));
                kept_info.push_back(std::move(ray_info_[i]));
            }
        for (std::size_t i = 0; i < new_rays.size(); ++i) {
            kept.push_back(std::move(new_rays[i]));
            kept_info.push_back(std::move(new_info[i]));
        }
        if (kept.size() > kRayLimit)
            throw CapacityError("double description exceeded the ray limit (" +
                                std::to_string(kept.size()) + " rays after " +
                                std::to_string(cur + 1) + " constraints)");
        ray_vec_ = std::move(kept);
        ray_info_ = std::move(kept_info);
    }

    int dim_;
    RationalMat lineality_;
    RationalMat ray_vec_;
    std::vector<RayInfo> ray_info_;
    std::size_t n_ineq_ = 0;
};

}  // namespace geom_detail

// H -> V: homogenize, run double description, split rays by the lifting
// coordinate. Lineality in the result is rejected (our polyhedra are pointed).
inline VForm hv_to_vertices(const HForm& h, int dim) {
    geom_detail::DoubleDescription dd(dim + 1);
    for (std::size_t i = 0; i < h.eq_a.size(); ++i) {
        RationalVec row = h.eq_a[i];
        row.push_back(-h.eq_b[i]);
        dd.add_equality(row);
    }
    for (std::size_t i = 0; i < h.ineq_a.size(); ++i) {
        RationalVec row = h.ineq_a[i];
        row.push_back(-h.ineq_b[i]);
        dd.add_inequality(row);
    }
    {
        RationalVec t(static_cast<std::size_t>(dim + 1), 0);
        t[static_cast<std::size_t>(dim)] = 1;
        dd.add_inequality(t);
    }
    if (!dd.lineality().empty())
        throw DomainError("polyhedron has lineality; vertex form undefined");
    VForm v;
    for (const auto& ray : dd.rays()) {
        const Rational t = ray[static_cast<std::size_t>(dim)];
        RationalVec x(ray.begin(), ray.end() - 1);
        if (t == 0) {
            v.rays.push_back(std::move(x));
        } else {
            for (auto& c : x) c /= t;
            v.vertices.push_back(std::move(x));
        }
    }
    return v;
}

// V -> H via the polar: facets of cone{(v,1),(r,0)} are the extreme rays of
// its dual; the dual's lineality carries the affine-hull equalities.
inline HForm hv_to_halfspaces(const VForm& v, int dim) {
    geom_detail::DoubleDescription dd(dim + 1);
    auto add_gen = [&](const RationalVec& g, const Rational& last) {
        RationalVec row = g;
        row.push_back(last);
        dd.add_inequality(row);
    };
    for (const auto& vert : v.vertices) add_gen(vert, 1);
    for (const auto& ray : v.rays) add_gen(ray, 0);

    HForm h;
    auto is_trivial = [&](const RationalVec& w) {
        for (int k = 0; k < dim; ++k)
            if (w[static_cast<std::size_t>(k)] != 0) return false;
        return true;
    };
    for (const auto& w : dd.rays()) {
        if (is_trivial(w)) continue;  // the t >= 0 facet of the homogenization
        RationalVec a(w.begin(), w.end() - 1);
        h.ineq_a.push_back(std::move(a));
        h.ineq_b.push_back(-w[static_cast<std::size_t>(dim)]);
    }
    for (const auto& w : dd.lineality()) {
        if (is_trivial(w)) continue;
        RationalVec a(w.begin(), w.end() - 1);
        h.eq_a.push_back(std::move(a));
        h.eq_b.push_back(-w[static_cast<std::size_t>(dim)]);
    }
    return h;
}

inline Polyhedron hv_convert(const Polyhedron& p) {
    Polyhedron out = p;
    if (p.h && !p.v) {
        out.v = hv_to_vertices(*p.h, p.dim);
    } else if (p.v && !p.h) {
        out.h = hv_to_halfspaces(*p.v, p.dim);
    }
    return out;
}

// --- the three polytopes ----------------------------------------------------

// stacked-coordinate offsets per pattern
inline std::vector<std::uint64_t> stacked_offsets(const DiscreteSpace& space,
                                                  const PatternCollection& coll) {
    std::vector<std::uint64_t> off(coll.patterns.size() + 1, 0);
    for (std::size_t s = 0; s < coll.patterns.size(); ++s)
        off[s + 1] = off[s] + pattern_cells(space, coll.patterns[s]);
    return off;
}

// V-form of the marginal polytope: the distinct columns of A.
inline Polyhedron marginal_polytope(const DiscreteSpace& space,
                                    const PatternCollection& coll) {
    if (space.joint_size() > 4096)
        throw CapacityError("marginal polytope guard: joint space too large");
    MarginalOperator op(space, coll);
    Polyhedron p;
    p.dim = static_cast<int>(op.rows());
    VForm v;
    std::vector<RationalVec> cols;
    for (std::uint64_t x = 0; x < op.cols(); ++x) {
        RationalVec col(op.rows(), 0);
        for (std::uint64_t r : op.column(x)) col[r] = 1;
        cols.push_back(std::move(col));
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    v.vertices = std::move(cols);
    p.v = std::move(v);
    return p;
}

// H-form of the consistent polytope: nonnegativity, per-pattern total mass
// one, and overlap-marginal agreement for every overlapping pair, with
// redundant equalities removed by rational row reduction.
inline Polyhedron consistent_polytope(const DiscreteSpace& space,
                                      const PatternCollection& coll) {
    const auto off = stacked_offsets(space, coll);
    const int dim = static_cast<int>(off.back());

    HForm h;
    for (int i = 0; i < dim; ++i) {
        RationalVec row(static_cast<std::size_t>(dim), 0);
        row[static_cast<std::size_t>(i)] = 1;
        h.ineq_a.push_back(std::move(row));
        h.ineq_b.push_back(0);
    }

    RationalMat candidates;
    RationalVec rhs;
    for (std::size_t s = 0; s < coll.patterns.size(); ++s) {
        RationalVec row(static_cast<std::size_t>(dim), 0);
        for (std::uint64_t i = off[s]; i < off[s + 1]; ++i) row[i] = 1;
        candidates.push_back(std::move(row));
        rhs.push_back(1);
    }
    for (std::size_t s1 = 0; s1 < coll.patterns.size(); ++s1) {
        for (std::size_t s2 = s1 + 1; s2 < coll.patterns.size(); ++s2) {
            const auto& p1 = coll.patterns[s1];
            const auto& p2 = coll.patterns[s2];
            const auto overlap = p1.intersect(p2);
            if (!overlap) continue;
            const std::uint64_t cells = pattern_cells(space, *overlap);
            for (std::uint64_t t = 0; t < cells; ++t) {
                RationalVec row(static_cast<std::size_t>(dim), 0);
                const auto tvals = decode_cell(space, *overlap, t);
                auto mark = [&](const Pattern& pat, std::uint64_t base,
                                Rational sign) {
                    const std::uint64_t n = pattern_cells(space, pat);
                    for (std::uint64_t c = 0; c < n; ++c) {
                        const auto vals = decode_cell(space, pat, c);
                        bool hit = true;
                        for (int k = 0; k < overlap->size() && hit; ++k) {
                            const auto& pv = pat.vars();
                            const int pos = static_cast<int>(
                                std::lower_bound(pv.begin(), pv.end(),
                                                 overlap->var(k)) -
                                pv.begin());
                            hit = vals[static_cast<std::size_t>(pos)] ==
                                  tvals[static_cast<std::size_t>(k)];
                        }
                        if (hit) row[base + c] += sign;
                    }
                };
                mark(p1, off[s1], 1);
                mark(p2, off[s2], -1);
                candidates.push_back(std::move(row));
                rhs.push_back(0);
            }
        }
    }

    // keep only rank-increasing equality rows
    geom_detail::Rref rref;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        RationalVec row = candidates[i];
        row.push_back(rhs[i]);
        if (rref.insert(row)) {
            h.eq_a.push_back(std::move(candidates[i]));
            h.eq_b.push_back(rhs[i]);
        }
    }

    Polyhedron p;
    p.dim = dim;
    p.h = std::move(h);
    return p;
}

// --- essential facets of the Minkowski sum ----------------------------------

enum class FacetKind { Essential, Nonnegativity, Equality };

struct FacetRow {
    RationalVec a;  // a'x >= b
    Rational b = 0;
    FacetKind kind = FacetKind::Essential;
    // for essential rows: the dual functional |S| a / |b|, shifted into
    // [-1, |S|-1] modulo the consistency equalities (floating point)
    std::vector<double> functional;
};

struct FacetSystem {
    int dim = 0;
    int essential_count = 0;
    std::vector<FacetRow> rows;
    int cons_equalities = 0;  // equality rows inherited from P^cons
};

namespace geom_detail {

// Feasibility shift of f0 into [-1, hi] along the span of `directions`,
// solved in floating point; returns the shifted vector (or f0 unchanged when
// no shift is needed or the solve fails).
inline std::vector<double> shift_into_box(const std::vector<double>& f0,
                                          const std::vector<std::vector<double>>&
                                              directions,
                                          double hi) {
    const std::size_t n = f0.size();
    bool inside = true;
    for (double v : f0) inside &= v >= -1.0 - 1e-9 && v <= hi + 1e-9;
    if (inside || directions.empty()) return f0;

    // variables: t+ and t- per direction; rows: f0 + D t <= hi, -(f0 + D t) <= 1
    const std::size_t k = directions.size();
    std::vector<std::vector<double>> A(2 * n, std::vector<double>(2 * k, 0.0));
    std::vector<double> b(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            A[i][j] = directions[j][i];
            A[i][k + j] = -directions[j][i];
            A[n + i][j] = -directions[j][i];
            A[n + i][k + j] = directions[j][i];
        }
        b[i] = hi - f0[i];
        b[n + i] = f0[i] + 1.0;
    }
    const std::vector<double> c(2 * k, 0.0);
    const auto res = lp_detail::solve_max(A, b, c);
    if (res.status != lp_detail::LpStatus::Optimal) return f0;
    std::vector<double> f = f0;
    for (std::size_t j = 0; j < k; ++j) {
        const double t = res.x[j] - res.x[k + j];
        if (t == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) f[i] += t * directions[j][i];
    }
    return f;
}

}  // namespace geom_detail

// Facet system of P^{0,*} + P^{cons,**}: V-form assembled from the columns
// of A as rays plus the vertices of P^cons and the origin, converted to
// H-form and classified. The essential count F excludes nonnegativity rows
// and the equality rows shared with P^cons.
inline FacetSystem essential_facets_sum(const DiscreteSpace& space,
                                        const PatternCollection& coll) {
    const Polyhedron cons = consistent_polytope(space, coll);
    const VForm consV = hv_to_vertices(*cons.h, cons.dim);
    if (!consV.rays.empty())
        throw DomainError("consistent polytope should be bounded");

    const Polyhedron marg = marginal_polytope(space, coll);

    VForm sum;
    sum.vertices = consV.vertices;
    sum.vertices.push_back(RationalVec(static_cast<std::size_t>(cons.dim), 0));
    sum.rays = marg.v->vertices;

    const HForm h = hv_to_halfspaces(sum, cons.dim);

    geom_detail::Rref eq_basis;
    for (const auto& row : h.eq_a) eq_basis.insert(row);

    FacetSystem out;
    out.dim = cons.dim;
    out.cons_equalities = static_cast<int>(h.eq_a.size());
    const int ns = coll.count();

    for (std::size_t i = 0; i < h.eq_a.size(); ++i) {
        FacetRow row;
        row.a = h.eq_a[i];
        row.b = h.eq_b[i];
        row.kind = FacetKind::Equality;
        out.rows.push_back(std::move(row));
    }

    // coordinate functionals reduced mod the equality span
    std::vector<RationalVec> unit_reduced(static_cast<std::size_t>(out.dim));
    for (int k = 0; k < out.dim; ++k) {
        RationalVec e(static_cast<std::size_t>(out.dim), 0);
        e[static_cast<std::size_t>(k)] = 1;
        unit_reduced[static_cast<std::size_t>(k)] = eq_basis.reduce(e);
    }

    for (std::size_t i = 0; i < h.ineq_a.size(); ++i) {
        FacetRow row;
        row.a = h.ineq_a[i];
        row.b = h.ineq_b[i];
        row.kind = FacetKind::Essential;
        if (row.b == 0) {
            const RationalVec red = eq_basis.reduce(row.a);
            for (int k = 0; k < out.dim && row.kind == FacetKind::Essential; ++k) {
                const auto& u = unit_reduced[static_cast<std::size_t>(k)];
                // red == lambda * u for some lambda > 0?
                Rational lambda = 0;
                bool match = true;
                for (std::size_t c = 0; c < red.size() && match; ++c) {
                    if (u[c] == 0) {
                        match = red[c] == 0;
                    } else if (lambda == 0) {
                        lambda = red[c] / u[c];
                        match = lambda > 0;
                    } else {
                        match = red[c] == lambda * u[c];
                    }
                }
                if (match && lambda > 0) row.kind = FacetKind::Nonnegativity;
            }
        }
        if (row.kind == FacetKind::Essential) ++out.essential_count;
        out.rows.push_back(std::move(row));
    }

    // dual functionals for essential rows: a'x >= b with b < 0 rescales to
    // f = |S| a / |b| and is shifted into [-1, |S|-1] along the equalities
    std::vector<std::vector<double>> eq_dirs;
    for (const auto& e : h.eq_a) {
        std::vector<double> d(e.size());
        for (std::size_t k = 0; k < e.size(); ++k)
            d[k] = static_cast<double>(e[k]);
        eq_dirs.push_back(std::move(d));
    }
    for (auto& row : out.rows) {
        if (row.kind != FacetKind::Essential || row.b >= 0) continue;
        std::vector<double> f0(row.a.size());
        for (std::size_t k = 0; k < row.a.size(); ++k)
            f0[k] = static_cast<double>(ns) *
                    static_cast<double>(Rational(row.a[k] / (-row.b)));
        row.functional = geom_detail::shift_into_box(
            f0, eq_dirs, static_cast<double>(ns) - 1.0);
    }
    return out;
}

inline int facet_count_of_marginal_polytope(const DiscreteSpace& space,
                                            const PatternCollection& coll) {
    const Polyhedron marg = marginal_polytope(space, coll);
    const HForm h = hv_to_halfspaces(*marg.v, marg.dim);
    return static_cast<int>(h.ineq_a.size());
}

}  // namespace mcar
