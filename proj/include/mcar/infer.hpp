#pragma once

// The hypothesis tests: universal, improved, binned-continuous, and the
// bootstrap Monte Carlo test. All tests share the reduction + LP pipeline
// for the statistic; they differ in how the critical value is produced.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mcar/crit.hpp"
#include "mcar/ingest.hpp"
#include "mcar/json_io.hpp"
#include "mcar/lp.hpp"
#include "mcar/reduce.hpp"
#include "mcar/rng.hpp"

namespace mcar {

struct TestReport {
    std::string method;
    double statistic = 0.0;
    double alpha = 0.0;
    bool reject = false;
    std::optional<double> critical_value;  // operative threshold
    std::optional<double> c_universal;
    std::optional<double> c_improved;
    std::string active_bound;
    std::optional<double> p_value;
    std::optional<int> bootstrap_b;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> pattern_labels;
    std::vector<std::int64_t> sample_sizes;
    std::vector<std::string> reductions;
    std::vector<std::string> warnings;
    std::vector<double> bandwidths;
    std::optional<double> binning_bias;

    Json to_json() const {
        Json doc;
        doc["method"] = method;
        doc["statistic"] = statistic;
        doc["alpha"] = alpha;
        doc["decision"] = reject ? "reject" : "retain";
        if (critical_value) doc["critical_value"] = *critical_value;
        if (c_universal) doc["c_alpha"] = *c_universal;
        if (c_improved) doc["c_alpha_prime"] = *c_improved;
        if (!active_bound.empty()) doc["active_bound"] = active_bound;
        if (p_value) doc["p_value"] = *p_value;
        if (bootstrap_b) doc["B"] = *bootstrap_b;
        if (seed) doc["seed"] = *seed;
        Json sizes = Json::array();
        for (std::size_t i = 0; i < pattern_labels.size(); ++i) {
            Json e;
            e["pattern"] = pattern_labels[i];
            e["n"] = sample_sizes[i];
            sizes.push_back(std::move(e));
        }
        doc["sample_sizes"] = std::move(sizes);
        doc["reductions"] = reductions;
        doc["warnings"] = warnings;
        if (!bandwidths.empty()) doc["bandwidths"] = bandwidths;
        if (binning_bias) doc["binning_bias"] = *binning_bias;
        return doc;
    }
};

namespace infer_detail {

struct Prepared {
    MarginalSequence reduced;
    std::vector<std::string> reductions;
};

inline Prepared prepare(const MarginalSequence& seq) {
    auto drops = drop_to_fixpoint(seq);
    return {std::move(drops.seq), std::move(drops.descriptions)};
}

inline void fill_pattern_info(const MarginalSequence& seq, TestReport* report) {
    for (int i = 0; i < seq.count(); ++i) {
        report->pattern_labels.push_back(seq.pattern(i).label());
        report->sample_sizes.push_back(seq.sample_size(i));
    }
}

}  // namespace infer_detail

// Rejects when R(P-hat) >= C_alpha.
inline TestReport universal_test(const MarginalSequence& seq, double alpha) {
    auto prep = infer_detail::prepare(seq);
    TestReport report;
    report.method = "universal";
    report.alpha = alpha;
    report.reductions = prep.reductions;
    infer_detail::fill_pattern_info(prep.reduced, &report);

    const double c =
        c_alpha(prep.reduced.space(), prep.reduced.collection(), alpha);
    report.statistic = incompatibility_index(prep.reduced).index;
    report.c_universal = c;
    report.critical_value = c;
    report.active_bound = "universal";
    report.reject = report.statistic >= c;
    return report;
}

// Rejects when R(P-hat) >= min(C_alpha, C'_alpha). Facet information comes
// from the caller or, failing that, the catalog of the reduced family.
inline TestReport improved_test(const MarginalSequence& seq, double alpha,
                                std::optional<FacetInfo> facet = std::nullopt) {
    auto prep = infer_detail::prepare(seq);
    if (!facet)
        facet = facet_catalog(prep.reduced.space(), prep.reduced.collection());
    if (!facet)
        throw DomainError(
            "no facet information for this pattern family: pass F'/D_R "
            "explicitly or compute them with the geometry module");

    TestReport report;
    report.method = "improved";
    report.alpha = alpha;
    report.reductions = prep.reductions;
    infer_detail::fill_pattern_info(prep.reduced, &report);

    const auto cv =
        c_alpha_min(prep.reduced.space(), prep.reduced.collection(), alpha, facet);
    report.statistic = incompatibility_index(prep.reduced).index;
    report.c_universal = cv.universal;
    report.c_improved = cv.improved;
    report.critical_value = cv.minimum;
    report.active_bound = cv.active;
    report.reject = report.statistic >= cv.minimum;
    return report;
}

struct BootstrapOptions {
    double alpha = 0.05;
    int replicates = 99;  // B
    std::uint64_t seed = 1;
    bool literal_rule = false;  // compare against R(Q-hat) with <=, as printed
    int threads = 0;            // 0: hardware concurrency
};

// Monte Carlo test: resamples n_S observations per pattern from the closest
// compatible sequence Q-hat and compares the statistic against the bootstrap
// distribution. p = (1 + #{R_b >= R-hat}) / (B + 1); ties favour retention.
inline TestReport bootstrap_test(const MarginalSequence& seq,
                                 const BootstrapOptions& opt) {
    crit_detail::check_alpha(opt.alpha);
    if (opt.replicates < 1) throw DomainError("bootstrap needs B >= 1");
    auto prep = infer_detail::prepare(seq);
    crit_detail::check_sizes(prep.reduced.collection());

    TestReport report;
    report.method = "bootstrap";
    report.alpha = opt.alpha;
    report.bootstrap_b = opt.replicates;
    report.seed = opt.seed;
    report.reductions = prep.reductions;
    infer_detail::fill_pattern_info(prep.reduced, &report);
    if (opt.alpha * (opt.replicates + 1) < 1.0)
        report.warnings.push_back(
            "alpha (B+1) < 1: the test cannot reject at this level");

    MarginalOperator op(prep.reduced.space(), prep.reduced.collection());
    const auto w = incompatibility_index(op, prep.reduced);
    report.statistic = w.index;
    if (!w.closest_compatible)
        throw DomainError(
            "statistic is at the degenerate value 1: the closest compatible "
            "sequence is undefined, so the bootstrap null cannot be sampled");
    const MarginalSequence& qhat = *w.closest_compatible;

    const double threshold =
        opt.literal_rule ? incompatibility_index(op, qhat).index
                         : report.statistic;

    const int B = opt.replicates;
    std::vector<double> stats(static_cast<std::size_t>(B));
    int n_threads = opt.threads > 0
                        ? opt.threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, B));

    auto worker = [&](int offset) {
        for (int b = offset; b < B; b += n_threads) {
            Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(b)));
            std::vector<std::vector<double>> tables;
            for (int s = 0; s < qhat.count(); ++s) {
                const std::int64_t n = prep.reduced.sample_size(s);
                const auto counts = sample_counts(qhat.table(s), n, rng);
                std::vector<double> t(counts.size());
                for (std::size_t c = 0; c < t.size(); ++c)
                    t[c] = static_cast<double>(counts[c]) /
                           static_cast<double>(n);
                tables.push_back(std::move(t));
            }
            MarginalSequence emp(prep.reduced.space(),
                                 prep.reduced.collection(), std::move(tables));
            stats[static_cast<std::size_t>(b)] =
                incompatibility_index(op, emp).index;
        }
    };
    if (n_threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker, k);
        for (auto& t : pool) t.join();
    }

    int extreme = 0;
    for (double rb : stats) {
        if (opt.literal_rule)
            extreme += rb <= threshold + 1e-12;
        else
            extreme += rb >= threshold - 1e-12;
    }
    const double p = static_cast<double>(1 + extreme) /
                     static_cast<double>(B + 1);
    report.p_value = p;
    report.reject = p <= opt.alpha;
    return report;
}

// Binned test for mixed discrete/continuous data: discretize, then apply the
// improved machinery with the binned-space critical value. The report keeps
// the bandwidths and the smoothing bias term for context.
inline TestReport continuous_test(const IncompleteDataset& data,
                                  const BinningSpec& spec, double alpha,
                                  std::optional<FacetInfo> facet = std::nullopt) {
    const IncompleteDataset binned = bin_continuous(data, spec);
    const MarginalSequence emp = empirical_marginals(binned);
    auto prep = infer_detail::prepare(emp);

    TestReport report;
    report.method = "continuous";
    report.alpha = alpha;
    report.reductions = prep.reductions;
    report.bandwidths = spec.bandwidths;
    infer_detail::fill_pattern_info(prep.reduced, &report);
    if (data.dropped_all_missing > 0)
        report.warnings.push_back(
            std::to_string(data.dropped_all_missing) +
            " fully-missing rows were dropped");

    double bias = 0.0;
    for (std::size_t j = 0; j < spec.bandwidths.size(); ++j)
        bias += std::pow(spec.bandwidths[j], spec.holder_r[j]);
    bias *= spec.holder_l * (prep.reduced.count() - 1);
    report.binning_bias = bias;

    if (!facet)
        facet = facet_catalog(prep.reduced.space(), prep.reduced.collection());
    if (!facet)
        report.warnings.push_back(
            "no facet information for the binned family: using the universal "
            "critical value only");

    const auto cv = c_alpha_star(prep.reduced.space(),
                                 prep.reduced.collection(), alpha, facet);
    report.statistic = incompatibility_index(prep.reduced).index;
    report.c_universal = cv.universal;
    report.c_improved = cv.improved;
    report.critical_value = cv.minimum;
    report.active_bound = cv.active;
    report.reject = report.statistic >= cv.minimum;
    return report;
}

// dataset-level entry points
inline TestReport universal_test(const IncompleteDataset& data, double alpha) {
    return universal_test(empirical_marginals(data), alpha);
}
inline TestReport improved_test(const IncompleteDataset& data, double alpha,
                                std::optional<FacetInfo> facet = std::nullopt) {
    return improved_test(empirical_marginals(data), alpha, std::move(facet));
}
inline TestReport bootstrap_test(const IncompleteDataset& data,
                                 const BootstrapOptions& opt) {
    return bootstrap_test(empirical_marginals(data), opt);
}

}  // namespace mcar
