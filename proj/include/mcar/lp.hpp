#pragma once

// Computational core: the marginal operator A, the incompatibility index
//
//     R(P_S) = 1 - max{ 1'p : p >= 0, A p <= p_S },
//
// its witness decomposition P_S = (1-R) Q + R T, and the dual witness
// recovered from the LP prices.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcar/model.hpp"

namespace mcar {

namespace lp_detail {

constexpr double kTol = 1e-9;

enum class LpStatus { Optimal, IterationLimit, Infeasible };

struct LpResult {
    LpStatus status = LpStatus::Optimal;
    double objective = 0.0;
    std::vector<double> x;
    std::vector<double> dual;  // row prices; valid when all b >= 0
    int iterations = 0;
};

// Dense tableau simplex for  max c'x  s.t.  Ax <= b, x >= 0.
// Rows with negative b get an artificial variable and a phase-1 pass.
// Pivoting: Dantzig with lowest-index tie-breaks; Bland's rule takes over
// after a degeneracy streak so termination is guaranteed.
class Simplex {
  public:
    Simplex(const std::vector<std::vector<double>>& A,
            const std::vector<double>& b, const std::vector<double>& c)
        : m_(static_cast<int>(A.size())), n_(static_cast<int>(c.size())) {
        row_sign_.assign(static_cast<std::size_t>(m_), 1.0);
        std::vector<int> artificial_rows;
        for (int i = 0; i < m_; ++i)
            if (b[static_cast<std::size_t>(i)] < 0.0) artificial_rows.push_back(i);
        na_ = static_cast<int>(artificial_rows.size());
        cols_ = n_ + m_ + na_;
        entering_limit_ = cols_;

        tab_.assign(static_cast<std::size_t>(m_),
                    std::vector<double>(static_cast<std::size_t>(cols_ + 1), 0.0));
        basis_.resize(static_cast<std::size_t>(m_));
        int next_art = n_ + m_;
        for (int i = 0; i < m_; ++i) {
            auto& row = tab_[static_cast<std::size_t>(i)];
            const double sign = b[static_cast<std::size_t>(i)] < 0.0 ? -1.0 : 1.0;
            row_sign_[static_cast<std::size_t>(i)] = sign;
            for (int j = 0; j < n_; ++j)
                row[static_cast<std::size_t>(j)] =
                    sign * A[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            row[static_cast<std::size_t>(n_ + i)] = sign;  // slack
            row[static_cast<std::size_t>(cols_)] =
                sign * b[static_cast<std::size_t>(i)];
            if (sign < 0.0) {
                row[static_cast<std::size_t>(next_art)] = 1.0;
                basis_[static_cast<std::size_t>(i)] = next_art++;
            } else {
                basis_[static_cast<std::size_t>(i)] = n_ + i;
            }
        }
        c_ = c;
    }

    LpResult run(int iter_cap) {
        LpResult res;
        if (na_ > 0) {
            // phase 1: maximize -(sum of artificials)
            std::vector<double> cost(static_cast<std::size_t>(cols_), 0.0);
            for (int j = n_ + m_; j < cols_; ++j)
                cost[static_cast<std::size_t>(j)] = -1.0;
            if (!iterate(cost, iter_cap, &res)) return res;
            double art_mass = 0.0;
            for (int i = 0; i < m_; ++i)
                if (basis_[static_cast<std::size_t>(i)] >= n_ + m_)
                    art_mass += tab_[static_cast<std::size_t>(i)]
                                    [static_cast<std::size_t>(cols_)];
            if (art_mass > 1e-7) {
                res.status = LpStatus::Infeasible;
                return res;
            }
            pivot_out_artificials();
        }
        entering_limit_ = n_ + m_;  // artificials may not re-enter
        std::vector<double> cost(static_cast<std::size_t>(cols_), 0.0);
        for (int j = 0; j < n_; ++j)
            cost[static_cast<std::size_t>(j)] = c_[static_cast<std::size_t>(j)];
        if (!iterate(cost, iter_cap, &res)) return res;

        res.status = LpStatus::Optimal;
        res.x.assign(static_cast<std::size_t>(n_), 0.0);
        for (int i = 0; i < m_; ++i) {
            const int bi = basis_[static_cast<std::size_t>(i)];
            if (bi < n_)
                res.x[static_cast<std::size_t>(bi)] = std::max(
                    0.0,
                    tab_[static_cast<std::size_t>(i)][static_cast<std::size_t>(cols_)]);
        }
        res.objective = 0.0;
        for (int j = 0; j < n_; ++j)
            res.objective += c_[static_cast<std::size_t>(j)] *
                             res.x[static_cast<std::size_t>(j)];
        // prices from the slack reduced costs
        res.dual.assign(static_cast<std::size_t>(m_), 0.0);
        for (int i = 0; i < m_; ++i)
            res.dual[static_cast<std::size_t>(i)] =
                -rc_[static_cast<std::size_t>(n_ + i)] *
                row_sign_[static_cast<std::size_t>(i)];
        res.iterations = total_iters_;
        return res;
    }

  private:
    // Runs the simplex loop for the given cost vector. Returns false (and
    // sets *res) only when the iteration cap is hit.
    bool iterate(const std::vector<double>& cost, int iter_cap, LpResult* res) {
        compute_rc(cost);
        bool bland = false;
        int degenerate_streak = 0;
        for (;;) {
            if (total_iters_ >= iter_cap) {
                res->status = LpStatus::IterationLimit;
                res->iterations = total_iters_;
                return false;
            }
            const int enter = pick_entering(bland);
            if (enter < 0) return true;
            const int leave = pick_leaving(enter, bland);
            if (leave < 0) return true;  // unbounded: cannot happen for our LPs
            const double ratio =
                tab_[static_cast<std::size_t>(leave)][static_cast<std::size_t>(cols_)] /
                tab_[static_cast<std::size_t>(leave)][static_cast<std::size_t>(enter)];
            if (ratio <= kTol) {
                if (++degenerate_streak > 40) bland = true;
            } else {
                degenerate_streak = 0;
            }
            pivot(leave, enter);
            ++total_iters_;
        }
    }

    void compute_rc(const std::vector<double>& cost) {
        rc_ = cost;
        obj_ = 0.0;
        for (int i = 0; i < m_; ++i) {
            const double cb = cost[static_cast<std::size_t>(
                basis_[static_cast<std::size_t>(i)])];
            if (cb == 0.0) continue;
            const auto& row = tab_[static_cast<std::size_t>(i)];
            for (int j = 0; j < cols_; ++j)
                rc_[static_cast<std::size_t>(j)] -=
                    cb * row[static_cast<std::size_t>(j)];
            obj_ += cb * row[static_cast<std::size_t>(cols_)];
        }
    }

    int pick_entering(bool bland) const {
        int best = -1;
        double best_rc = kTol;
        for (int j = 0; j < entering_limit_; ++j) {
            const double r = rc_[static_cast<std::size_t>(j)];
            if (r > kTol) {
                if (bland) return j;
                if (r > best_rc) {
                    best_rc = r;
                    best = j;
                }
            }
        }
        return best;
    }

    int pick_leaving(int enter, bool bland) const {
        int best = -1;
        double best_ratio = 0.0;
        for (int i = 0; i < m_; ++i) {
            const double a =
                tab_[static_cast<std::size_t>(i)][static_cast<std::size_t>(enter)];
            if (a <= kTol) continue;
            const double ratio =
                tab_[static_cast<std::size_t>(i)][static_cast<std::size_t>(cols_)] / a;
            if (best < 0 || ratio < best_ratio - 1e-12) {
                best = i;
                best_ratio = ratio;
            } else if (ratio < best_ratio + 1e-12) {
                // tie: lowest basic-variable index under Bland, lowest row otherwise
                if (bland && basis_[static_cast<std::size_t>(i)] <
                                 basis_[static_cast<std::size_t>(best)])
                    best = i;
            }
        }
        return best;
    }

    void pivot(int leave, int enter) {
        auto& prow = tab_[static_cast<std::size_t>(leave)];
        const double piv = prow[static_cast<std::size_t>(enter)];
        for (double& v : prow) v /= piv;
        for (int i = 0; i < m_; ++i) {
            if (i == leave) continue;
            auto& row = tab_[static_cast<std::size_t>(i)];
            const double factor = row[static_cast<std::size_t>(enter)];
            if (factor == 0.0) continue;
            for (int j = 0; j <= cols_; ++j)
                row[static_cast<std::size_t>(j)] -=
                    factor * prow[static_cast<std::size_t>(j)];
        }
        const double rfac = rc_[static_cast<std::size_t>(enter)];
        if (rfac != 0.0) {
            for (int j = 0; j < cols_; ++j)
                rc_[static_cast<std::size_t>(j)] -=
                    rfac * prow[static_cast<std::size_t>(j)];
            obj_ += rfac * prow[static_cast<std::size_t>(cols_)];
        }
        basis_[static_cast<std::size_t>(leave)] = enter;
    }

    // After phase 1, swap any zero-level artificial out of the basis.
    void pivot_out_artificials() {
        for (int i = 0; i < m_; ++i) {
            if (basis_[static_cast<std::size_t>(i)] < n_ + m_) continue;
            const auto& row = tab_[static_cast<std::size_t>(i)];
            int enter = -1;
            for (int j = 0; j < n_ + m_; ++j)
                if (std::abs(row[static_cast<std::size_t>(j)]) > kTol) {
                    enter = j;
                    break;
                }
            if (enter >= 0) pivot(i, enter);
            // all-zero row: constraint was redundant, leave the artificial at 0
        }
    }

    int m_, n_, na_ = 0, cols_ = 0;
    int entering_limit_ = 0;
    std::vector<std::vector<double>> tab_;
    std::vector<int> basis_;
    std::vector<double> rc_, c_, row_sign_;
    double obj_ = 0.0;
    int total_iters_ = 0;
};

inline LpResult solve_max(const std::vector<std::vector<double>>& A,
                          const std::vector<double>& b,
                          const std::vector<double>& c) {
    const int m = static_cast<int>(A.size());
    const int n = static_cast<int>(c.size());
    Simplex solver(A, b, c);
    return solver.run(50 * (m + n + m));
}

}  // namespace lp_detail

// The 0/1 operator sending a joint mass vector to its stacked marginal
// sequence; stored sparsely by column (each column has exactly |S| ones).
class MarginalOperator {
  public:
    MarginalOperator(const DiscreteSpace& space, const PatternCollection& collection)
        : space_(space), collection_(collection) {
        cols_ = space.joint_size();
        row_offset_.resize(collection.patterns.size() + 1, 0);
        for (std::size_t s = 0; s < collection.patterns.size(); ++s)
            row_offset_[s + 1] =
                row_offset_[s] + pattern_cells(space, collection.patterns[s]);
        rows_ = row_offset_.back();

        const Pattern full = full_pattern();
        col_rows_.resize(cols_);
        for (std::uint64_t x = 0; x < cols_; ++x) {
            const auto joint = decode_cell(space_, full, x);
            auto& rows = col_rows_[x];
            rows.reserve(collection.patterns.size());
            for (std::size_t s = 0; s < collection.patterns.size(); ++s) {
                const Pattern& pat = collection.patterns[s];
                std::vector<int> sub(static_cast<std::size_t>(pat.size()));
                for (int k = 0; k < pat.size(); ++k)
                    sub[static_cast<std::size_t>(k)] =
                        joint[static_cast<std::size_t>(pat.var(k))];
                rows.push_back(row_offset_[s] + encode_cell(space_, pat, sub));
            }
        }
    }

    std::uint64_t rows() const { return rows_; }
    std::uint64_t cols() const { return cols_; }
    std::uint64_t row_offset(int s) const {
        return row_offset_[static_cast<std::size_t>(s)];
    }
    const std::vector<std::uint64_t>& column(std::uint64_t x) const {
        return col_rows_[x];
    }

    std::vector<double> apply(const std::vector<double>& joint) const {
        std::vector<double> out(rows_, 0.0);
        for (std::uint64_t x = 0; x < cols_; ++x)
            for (std::uint64_t r : col_rows_[x]) out[r] += joint[x];
        return out;
    }

    std::vector<std::vector<double>> dense() const {
        std::vector<std::vector<double>> A(
            rows_, std::vector<double>(cols_, 0.0));
        for (std::uint64_t x = 0; x < cols_; ++x)
            for (std::uint64_t r : col_rows_[x]) A[r][x] = 1.0;
        return A;
    }

    Pattern full_pattern() const {
        std::vector<int> all(static_cast<std::size_t>(space_.dim()));
        for (int j = 0; j < space_.dim(); ++j) all[static_cast<std::size_t>(j)] = j;
        return Pattern(std::move(all));
    }

    const DiscreteSpace& space() const { return space_; }
    const PatternCollection& collection() const { return collection_; }

  private:
    DiscreteSpace space_;
    PatternCollection collection_;
    std::uint64_t rows_ = 0, cols_ = 0;
    std::vector<std::uint64_t> row_offset_;
    std::vector<std::vector<std::uint64_t>> col_rows_;
};

inline std::vector<double> stack_tables(const MarginalSequence& seq) {
    std::vector<double> out;
    out.reserve(seq.stacked_dim());
    for (int i = 0; i < seq.count(); ++i)
        out.insert(out.end(), seq.table(i).begin(), seq.table(i).end());
    return out;
}

struct WitnessDecomposition {
    double index = 0.0;                 // R(P_S), clamped to [0,1]
    double index_raw = 0.0;             // pre-clamp value
    std::vector<double> joint_mass;     // optimal p*, total mass 1 - R
    std::optional<MarginalSequence> closest_compatible;  // Q, absent if R ~ 1
    std::optional<MarginalSequence> residual;            // T, absent if R ~ 0
    std::vector<std::vector<double>> dual;  // f_S per pattern, in [-1, |S|-1]
    double dual_value = 0.0;            // -(1/|S|) sum f_S' p_S
    int lp_iterations = 0;
};

inline WitnessDecomposition incompatibility_index(const MarginalOperator& op,
                                                  const MarginalSequence& seq) {
    if (!seq.is_probability())
        throw DomainError("index computation needs probability tables");
    if (op.rows() * op.cols() > (std::uint64_t{1} << 23))
        throw CapacityError("operator too large for the dense simplex (" +
                            std::to_string(op.rows()) + "x" +
                            std::to_string(op.cols()) + ")");
    const int ns = seq.count();
    const std::vector<double> b = stack_tables(seq);
    const std::vector<double> c(op.cols(), 1.0);
    auto lp = lp_detail::solve_max(op.dense(), b, c);
    if (lp.status != lp_detail::LpStatus::Optimal)
        throw SolverError("LP did not converge after " +
                          std::to_string(lp.iterations) + " iterations (" +
                          std::to_string(op.rows()) + "x" +
                          std::to_string(op.cols()) + " operator)");

    WitnessDecomposition out;
    out.lp_iterations = lp.iterations;
    out.index_raw = 1.0 - lp.objective;
    out.index = std::min(1.0, std::max(0.0, out.index_raw));
    out.joint_mass = std::move(lp.x);

    const std::vector<double> margins = op.apply(out.joint_mass);
    const double r = out.index;

    auto block_tables = [&](const std::vector<double>& stacked) {
        std::vector<std::vector<double>> tables;
        for (int s = 0; s < ns; ++s) {
            const std::uint64_t lo = op.row_offset(s), hi = op.row_offset(s + 1);
            std::vector<double> t(stacked.begin() + static_cast<std::ptrdiff_t>(lo),
                                  stacked.begin() + static_cast<std::ptrdiff_t>(hi));
            double sum = 0.0;
            for (double& v : t) {
                if (v < 0.0) v = 0.0;
                sum += v;
            }
            if (sum > 0.0)
                for (double& v : t) v /= sum;
            tables.push_back(std::move(t));
        }
        return tables;
    };

    if (1.0 - r > 1e-9)
        out.closest_compatible = MarginalSequence(
            seq.space(), seq.collection(), block_tables(margins));
    if (r > 1e-9) {
        std::vector<double> res(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) res[i] = b[i] - margins[i];
        out.residual = MarginalSequence(seq.space(), seq.collection(),
                                        block_tables(res));
    }

    // Dual witness: prices z solve min{p_S'z : A'z >= 1, z >= 0}, so
    // f = |S| z - 1 satisfies f >= -1 and A'f >= 0; capping at |S|-1 keeps
    // the pointwise sums nonnegative and cannot decrease the value.
    out.dual.resize(static_cast<std::size_t>(ns));
    double value = 0.0;
    for (int s = 0; s < ns; ++s) {
        const std::uint64_t lo = op.row_offset(s), hi = op.row_offset(s + 1);
        auto& f = out.dual[static_cast<std::size_t>(s)];
        f.resize(hi - lo);
        for (std::uint64_t i = lo; i < hi; ++i) {
            double v = ns * std::max(0.0, lp.dual[i]) - 1.0;
            v = std::min(v, static_cast<double>(ns) - 1.0);
            f[i - lo] = v;
            value += v * b[i];
        }
    }
    out.dual_value = -value / ns;
    return out;
}

inline WitnessDecomposition incompatibility_index(const MarginalSequence& seq) {
    MarginalOperator op(seq.space(), seq.collection());
    return incompatibility_index(op, seq);
}

// Total-variation distance between two mass vectors on the same cells.
inline double tv_distance(const std::vector<double>& a,
                          const std::vector<double>& b) {
    double l1 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
    return 0.5 * l1;
}

// Max over overlapping pattern pairs of the TV distance between their
// common marginals; 0 for a consistent sequence.
inline double inconsistency(const MarginalSequence& seq) {
    double worst = 0.0;
    for (int i = 0; i < seq.count(); ++i) {
        for (int j = i + 1; j < seq.count(); ++j) {
            const auto overlap = seq.pattern(i).intersect(seq.pattern(j));
            if (!overlap) continue;
            const auto mi = restrict_table(seq.space(), seq.pattern(i),
                                           seq.table(i), *overlap);
            const auto mj = restrict_table(seq.space(), seq.pattern(j),
                                           seq.table(j), *overlap);
            worst = std::max(worst, tv_distance(mi, mj));
        }
    }
    return worst;
}

}  // namespace mcar
