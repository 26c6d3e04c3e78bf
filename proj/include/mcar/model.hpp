#pragma once

// Core domain types: variable spaces, observation patterns, marginal tables
// and the stacked-coordinate indexing shared by every other module.
//
// Conventions: variable indices and category values are 0-based internally;
// all 1-based conversion happens at the I/O boundary (ingest / CLI / JSON).
// Cells of a pattern are enumerated row-major over the pattern's sorted
// member variables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcar {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct RangeError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct IngestError : Error { using Error::Error; };
struct CapacityError : Error { using Error::Error; };
struct SolverError : Error { using Error::Error; };
struct FamilyError : Error { using Error::Error; };
struct ReductionError : Error {
    ReductionError(const std::string& msg, double discrepancy)
        : Error(msg), max_discrepancy(discrepancy) {}
    double max_discrepancy = 0.0;
};

constexpr double kProbabilitySumTol = 1e-12;

// Joint enumerations are refused beyond this many cells.
constexpr std::uint64_t kJointCellLimit = std::uint64_t{1} << 22;

class DiscreteSpace {
  public:
    DiscreteSpace() = default;
    explicit DiscreteSpace(std::vector<int> alphabet_sizes)
        : sizes_(std::move(alphabet_sizes)) {
        if (sizes_.empty()) throw DomainError("space needs at least one variable");
        for (int m : sizes_)
            if (m < 1) throw DomainError("alphabet sizes must be >= 1");
    }

    int dim() const { return static_cast<int>(sizes_.size()); }
    int size(int var) const { return sizes_.at(static_cast<std::size_t>(var)); }
    const std::vector<int>& sizes() const { return sizes_; }

    // Total joint size, guarded against 64-bit overflow and the enumeration cap.
    std::uint64_t joint_size() const {
        std::uint64_t total = 1;
        for (int m : sizes_) {
            if (total > kJointCellLimit)
                throw CapacityError("joint space too large to enumerate");
            total *= static_cast<std::uint64_t>(m);
        }
        if (total > kJointCellLimit)
            throw CapacityError("joint space too large to enumerate");
        return total;
    }

    bool operator==(const DiscreteSpace& o) const { return sizes_ == o.sizes_; }

  private:
    std::vector<int> sizes_;
};

// A nonempty sorted set of variable indices.
class Pattern {
  public:
    Pattern() = default;
    explicit Pattern(std::vector<int> vars) : vars_(std::move(vars)) {
        std::sort(vars_.begin(), vars_.end());
        if (vars_.empty()) throw DomainError("pattern must be nonempty");
        if (std::adjacent_find(vars_.begin(), vars_.end()) != vars_.end())
            throw DomainError("pattern has repeated variable");
        if (vars_.front() < 0) throw DomainError("pattern variable out of range");
    }
    Pattern(std::initializer_list<int> vars) : Pattern(std::vector<int>(vars)) {}

    int size() const { return static_cast<int>(vars_.size()); }
    int var(int k) const { return vars_.at(static_cast<std::size_t>(k)); }
    const std::vector<int>& vars() const { return vars_; }

    bool contains(int v) const {
        return std::binary_search(vars_.begin(), vars_.end(), v);
    }
    bool contains(const Pattern& sub) const {
        return std::includes(vars_.begin(), vars_.end(), sub.vars_.begin(),
                             sub.vars_.end());
    }
    std::optional<Pattern> intersect(const Pattern& o) const {
        std::vector<int> out;
        std::set_intersection(vars_.begin(), vars_.end(), o.vars_.begin(),
                              o.vars_.end(), std::back_inserter(out));
        if (out.empty()) return std::nullopt;
        return Pattern(std::move(out));
    }
    std::optional<Pattern> minus(const std::vector<int>& drop) const {
        std::vector<int> out;
        for (int v : vars_)
            if (std::find(drop.begin(), drop.end(), v) == drop.end())
                out.push_back(v);
        if (out.empty()) return std::nullopt;
        return Pattern(std::move(out));
    }

    bool operator==(const Pattern& o) const { return vars_ == o.vars_; }
    bool operator<(const Pattern& o) const { return vars_ < o.vars_; }

    // Printable form with 1-based variable labels, e.g. {1,3}.
    std::string label() const {
        std::ostringstream os;
        os << '{';
        for (std::size_t i = 0; i < vars_.size(); ++i)
            os << (i ? "," : "") << vars_[i] + 1;
        os << '}';
        return os.str();
    }

  private:
    std::vector<int> vars_;
};

inline std::uint64_t pattern_cells(const DiscreteSpace& space, const Pattern& p) {
    std::uint64_t total = 1;
    for (int v : p.vars()) total *= static_cast<std::uint64_t>(space.size(v));
    return total;
}

// Mixed-radix index of a cell, row-major over the pattern's sorted members.
inline std::uint64_t encode_cell(const DiscreteSpace& space, const Pattern& p,
                                 const std::vector<int>& values) {
    if (static_cast<int>(values.size()) != p.size())
        throw RangeError("cell value count does not match pattern");
    std::uint64_t idx = 0;
    for (int k = 0; k < p.size(); ++k) {
        const int m = space.size(p.var(k));
        const int v = values[static_cast<std::size_t>(k)];
        if (v < 0 || v >= m)
            throw RangeError("cell value out of range for variable " +
                             std::to_string(p.var(k) + 1));
        idx = idx * static_cast<std::uint64_t>(m) + static_cast<std::uint64_t>(v);
    }
    return idx;
}

inline std::vector<int> decode_cell(const DiscreteSpace& space, const Pattern& p,
                                    std::uint64_t idx) {
    std::vector<int> values(static_cast<std::size_t>(p.size()));
    for (int k = p.size() - 1; k >= 0; --k) {
        const std::uint64_t m = static_cast<std::uint64_t>(space.size(p.var(k)));
        values[static_cast<std::size_t>(k)] = static_cast<int>(idx % m);
        idx /= m;
    }
    if (idx != 0) throw RangeError("cell index out of range");
    return values;
}

struct PatternCollection {
    std::vector<Pattern> patterns;
    std::vector<std::int64_t> sample_sizes;  // aligned with patterns; 0 = unset

    PatternCollection() = default;
    explicit PatternCollection(std::vector<Pattern> pats,
                               std::vector<std::int64_t> ns = {})
        : patterns(std::move(pats)), sample_sizes(std::move(ns)) {
        if (sample_sizes.empty()) sample_sizes.assign(patterns.size(), 0);
        if (sample_sizes.size() != patterns.size())
            throw DomainError("sample size per pattern required");
        for (std::size_t i = 0; i < patterns.size(); ++i)
            for (std::size_t j = i + 1; j < patterns.size(); ++j)
                if (patterns[i] == patterns[j])
                    throw DomainError("patterns must be pairwise distinct");
        for (std::int64_t n : sample_sizes)
            if (n < 0) throw DomainError("sample sizes must be nonnegative");
    }

    int count() const { return static_cast<int>(patterns.size()); }
    int find(const Pattern& p) const {
        for (std::size_t i = 0; i < patterns.size(); ++i)
            if (patterns[i] == p) return static_cast<int>(i);
        return -1;
    }
};

// One mass table per pattern, stacked in collection order.
class MarginalSequence {
  public:
    MarginalSequence() = default;
    MarginalSequence(DiscreteSpace space, PatternCollection collection,
                     std::vector<std::vector<double>> tables,
                     bool probability = true)
        : space_(std::move(space)),
          collection_(std::move(collection)),
          tables_(std::move(tables)),
          probability_(probability) {
        if (tables_.size() != collection_.patterns.size())
            throw DomainError("one table per pattern required");
        for (int i = 0; i < collection_.count(); ++i) {
            const auto& pat = collection_.patterns[static_cast<std::size_t>(i)];
            const auto& t = tables_[static_cast<std::size_t>(i)];
            if (t.size() != pattern_cells(space_, pat))
                throw DomainError("table size mismatch for pattern " + pat.label());
            double sum = 0.0;
            for (double v : t) {
                if (!(v >= 0.0) || !std::isfinite(v))
                    throw DomainError("table entries must be nonnegative for " +
                                      pat.label());
                sum += v;
            }
            if (probability_ && std::abs(sum - 1.0) > kProbabilitySumTol)
                throw DomainError("table for " + pat.label() +
                                  " does not sum to 1 (sum=" + std::to_string(sum) +
                                  ")");
        }
    }

    const DiscreteSpace& space() const { return space_; }
    const PatternCollection& collection() const { return collection_; }
    int count() const { return collection_.count(); }
    const Pattern& pattern(int i) const {
        return collection_.patterns[static_cast<std::size_t>(i)];
    }
    std::int64_t sample_size(int i) const {
        return collection_.sample_sizes[static_cast<std::size_t>(i)];
    }
    const std::vector<double>& table(int i) const {
        return tables_[static_cast<std::size_t>(i)];
    }
    bool is_probability() const { return probability_; }

    std::uint64_t stacked_dim() const {
        std::uint64_t total = 0;
        for (const auto& p : collection_.patterns)
            total += pattern_cells(space_, p);
        return total;
    }

    // Worst per-table deviation of the total mass from 1.
    double probability_defect() const {
        double worst = 0.0;
        for (const auto& t : tables_) {
            double sum = std::accumulate(t.begin(), t.end(), 0.0);
            worst = std::max(worst, std::abs(sum - 1.0));
        }
        return worst;
    }

  private:
    DiscreteSpace space_;
    PatternCollection collection_;
    std::vector<std::vector<double>> tables_;
    bool probability_ = true;
};

// Marginal of a table onto sub, summing over the dropped coordinates.
// Total mass is preserved.
inline std::vector<double> restrict_table(const DiscreteSpace& space,
                                          const Pattern& pattern,
                                          const std::vector<double>& mass,
                                          const Pattern& sub) {
    if (!pattern.contains(sub))
        throw DomainError("restriction target " + sub.label() +
                          " is not a subset of " + pattern.label());
    // positions of sub's members within the pattern
    std::vector<int> pos;
    for (int v : sub.vars())
        pos.push_back(static_cast<int>(
            std::lower_bound(pattern.vars().begin(), pattern.vars().end(), v) -
            pattern.vars().begin()));
    std::vector<double> out(pattern_cells(space, sub), 0.0);
    const std::uint64_t cells = pattern_cells(space, pattern);
    for (std::uint64_t c = 0; c < cells; ++c) {
        const auto values = decode_cell(space, pattern, c);
        std::vector<int> sub_values(pos.size());
        for (std::size_t k = 0; k < pos.size(); ++k)
            sub_values[k] = values[static_cast<std::size_t>(pos[k])];
        out[encode_cell(space, sub, sub_values)] += mass[c];
    }
    return out;
}

// Re-expresses a table over a sub-space given by `kept` (sorted original
// variable indices); every pattern variable must appear in `kept`.
inline Pattern relabel_pattern(const Pattern& p, const std::vector<int>& kept) {
    std::vector<int> out;
    for (int v : p.vars()) {
        auto it = std::lower_bound(kept.begin(), kept.end(), v);
        if (it == kept.end() || *it != v)
            throw DomainError("variable " + std::to_string(v + 1) +
                              " missing from relabel target");
        out.push_back(static_cast<int>(it - kept.begin()));
    }
    return Pattern(std::move(out));
}

inline DiscreteSpace subspace(const DiscreteSpace& space,
                              const std::vector<int>& kept) {
    std::vector<int> sizes;
    for (int v : kept) sizes.push_back(space.size(v));
    return DiscreteSpace(std::move(sizes));
}

// Rewrites the sequence under the variable bijection new -> old given by
// `old_of_new`. Handles non-monotone maps, so tables are re-encoded cell by
// cell rather than copied.
inline MarginalSequence permute_sequence(const MarginalSequence& seq,
                                         const std::vector<int>& old_of_new) {
    const int d = seq.space().dim();
    if (static_cast<int>(old_of_new.size()) != d)
        throw DomainError("permutation size mismatch");
    std::vector<int> new_of_old(static_cast<std::size_t>(d), -1);
    std::vector<int> sizes(static_cast<std::size_t>(d));
    for (int v = 0; v < d; ++v) {
        const int old_var = old_of_new[static_cast<std::size_t>(v)];
        if (old_var < 0 || old_var >= d ||
            new_of_old[static_cast<std::size_t>(old_var)] != -1)
            throw DomainError("old_of_new is not a bijection");
        new_of_old[static_cast<std::size_t>(old_var)] = v;
        sizes[static_cast<std::size_t>(v)] = seq.space().size(old_var);
    }
    const DiscreteSpace new_space(std::move(sizes));
    std::vector<Pattern> pats;
    std::vector<std::vector<double>> tabs;
    std::vector<std::int64_t> ns;
    for (int i = 0; i < seq.count(); ++i) {
        const Pattern& old_pat = seq.pattern(i);
        std::vector<int> new_vars;
        for (int v : old_pat.vars())
            new_vars.push_back(new_of_old[static_cast<std::size_t>(v)]);
        Pattern new_pat(std::move(new_vars));
        std::vector<double> t(pattern_cells(new_space, new_pat));
        for (std::uint64_t c = 0; c < t.size(); ++c) {
            const auto new_vals = decode_cell(new_space, new_pat, c);
            std::vector<int> old_vals(static_cast<std::size_t>(old_pat.size()));
            for (int k = 0; k < new_pat.size(); ++k) {
                const int old_var = old_of_new[static_cast<std::size_t>(
                    new_pat.var(k))];
                const auto& ov = old_pat.vars();
                const int pos = static_cast<int>(
                    std::lower_bound(ov.begin(), ov.end(), old_var) - ov.begin());
                old_vals[static_cast<std::size_t>(pos)] =
                    new_vals[static_cast<std::size_t>(k)];
            }
            t[c] = seq.table(i)[encode_cell(seq.space(), old_pat, old_vals)];
        }
        pats.push_back(std::move(new_pat));
        tabs.push_back(std::move(t));
        ns.push_back(seq.sample_size(i));
    }
    return MarginalSequence(new_space, PatternCollection(std::move(pats),
                                                         std::move(ns)),
                            std::move(tabs), seq.is_probability());
}

// Extracts the sub-sequence over `kept` variables; each requested pattern is
// obtained by restricting the table of `source[i]` (a superset pattern).
inline MarginalSequence sub_sequence(const MarginalSequence& seq,
                                     const std::vector<int>& kept,
                                     const std::vector<Pattern>& requested,
                                     const std::vector<int>& source) {
    const DiscreteSpace sub = subspace(seq.space(), kept);
    std::vector<Pattern> pats;
    std::vector<std::vector<double>> tabs;
    std::vector<std::int64_t> ns;
    for (std::size_t k = 0; k < requested.size(); ++k) {
        const int i = source[k];
        tabs.push_back(restrict_table(seq.space(), seq.pattern(i), seq.table(i),
                                      requested[k]));
        pats.push_back(relabel_pattern(requested[k], kept));
        ns.push_back(seq.sample_size(i));
    }
    return MarginalSequence(sub, PatternCollection(std::move(pats), std::move(ns)),
                            std::move(tabs), seq.is_probability());
}

}  // namespace mcar
