// mcar: test incomplete data for MCAR via compatibility of the observed
// marginal distributions.
//
// Exit codes: 0 retain / success, 3 reject, 2 usage error, 1 runtime error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcar/closedform.hpp"
#include "mcar/crit.hpp"
#include "mcar/geometry.hpp"
#include "mcar/infer.hpp"
#include "mcar/ingest.hpp"
#include "mcar/json_io.hpp"
#include "mcar/lp.hpp"
#include "mcar/reduce.hpp"
#include "mcar/sim.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitRetain = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitReject = 3;

using mcar::Json;

// "12,23,13" (one digit per variable) or "1-2,2-3,1-3"
std::vector<mcar::Pattern> parse_patterns(const std::string& text) {
    std::vector<mcar::Pattern> out;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) throw mcar::DomainError("empty pattern token");
        std::vector<int> vars;
        if (token.find('-') != std::string::npos) {
            std::stringstream ts(token);
            std::string part;
            while (std::getline(ts, part, '-'))
                vars.push_back(std::stoi(part) - 1);
        } else {
            for (char c : token) {
                if (c < '1' || c > '9')
                    throw mcar::DomainError(
                        "pattern token '" + token +
                        "': use digits 1-9 or the dashed form for wider spaces");
                vars.push_back(c - '1');
            }
        }
        out.push_back(mcar::Pattern(std::move(vars)));
    }
    if (out.empty()) throw mcar::DomainError("no patterns given");
    return out;
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) out.push_back(std::stod(token));
    return out;
}

std::vector<std::int64_t> parse_ints(const std::string& text) {
    std::vector<std::int64_t> out;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) out.push_back(std::stoll(token));
    return out;
}

mcar::Schema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw mcar::IngestError("cannot open schema file " + path);
    return mcar::parse_schema(in);
}

mcar::IncompleteDataset load_dataset(const std::string& csv_path,
                                     const std::string& schema_path) {
    std::ifstream csv(csv_path);
    if (!csv) throw mcar::IngestError("cannot open data file " + csv_path);
    return mcar::parse_dataset(csv, load_schema(schema_path));
}

Json facet_to_json(const mcar::FacetInfo& f) {
    Json doc;
    doc["F_prime"] = f.F_prime;
    doc["D_R"] = f.D_R;
    doc["source"] = f.source == mcar::FacetInfo::Source::Catalog ? "catalog"
                    : f.source == mcar::FacetInfo::Source::User  ? "user"
                                                                 : "geometry";
    if (!f.family.empty()) doc["family"] = f.family;
    return doc;
}

void emit(const Json& doc) { std::cout << doc.dump(2) << "\n"; }

// --- subcommand payloads ----------------------------------------------------

struct TestArgs {
    std::string data, schema;
    double alpha = 0.05;
    std::string method = "universal";
    int bootstrap_b = 99;
    std::uint64_t seed = 1;
    std::string bandwidths, holder_r;
    double holder_l = 1.0;
    double f_prime = -1.0, d_r = 1.0;
    bool facets_from_geometry = false;
    bool literal_rule = false;
    int threads = 0;
    std::string dump_marginals;
};

int run_test(const TestArgs& args) {
    auto ds = load_dataset(args.data, args.schema);

    std::optional<mcar::FacetInfo> facet;
    if (args.f_prime >= 0.0)
        facet = mcar::FacetInfo(args.f_prime, args.d_r,
                                mcar::FacetInfo::Source::User);

    mcar::TestReport report;
    if (args.method == "continuous") {
        mcar::BinningSpec spec =
            args.bandwidths.empty()
                ? mcar::default_binning(ds,
                                        args.holder_r.empty()
                                            ? std::vector<double>{}
                                            : parse_doubles(args.holder_r),
                                        args.holder_l)
                : mcar::BinningSpec(parse_doubles(args.bandwidths),
                                    args.holder_r.empty()
                                        ? std::vector<double>{}
                                        : parse_doubles(args.holder_r),
                                    args.holder_l);
        if (!args.dump_marginals.empty()) {
            std::ofstream out(args.dump_marginals);
            out << mcar::to_json(mcar::empirical_marginals(
                          mcar::bin_continuous(ds, spec)))
                       .dump(2)
                << "\n";
        }
        report = mcar::continuous_test(ds, spec, args.alpha, facet);
    } else {
        const auto seq = mcar::empirical_marginals(ds);
        if (!args.dump_marginals.empty()) {
            std::ofstream out(args.dump_marginals);
            out << mcar::to_json(seq).dump(2) << "\n";
        }
        if (args.method == "universal") {
            report = mcar::universal_test(seq, args.alpha);
        } else if (args.method == "improved") {
            if (!facet && args.facets_from_geometry) {
                auto prep = mcar::drop_to_fixpoint(seq);
                const auto fs = mcar::essential_facets_sum(
                    prep.seq.space(), prep.seq.collection());
                facet = mcar::FacetInfo(fs.essential_count, 1.0,
                                        mcar::FacetInfo::Source::Geometry);
            }
            report = mcar::improved_test(seq, args.alpha, facet);
        } else if (args.method == "bootstrap") {
            mcar::BootstrapOptions opt;
            opt.alpha = args.alpha;
            opt.replicates = args.bootstrap_b;
            opt.seed = args.seed;
            opt.literal_rule = args.literal_rule;
            opt.threads = args.threads;
            report = mcar::bootstrap_test(seq, opt);
        } else {
            throw mcar::DomainError("unknown test method '" + args.method + "'");
        }
    }
    if (ds.dropped_all_missing > 0 && report.method != "continuous")
        report.warnings.push_back(std::to_string(ds.dropped_all_missing) +
                                  " fully-missing rows were dropped");

    Json doc = report.to_json();
    doc["version"] = kVersion;
    Json cfg;
    cfg["data"] = args.data;
    cfg["schema"] = args.schema;
    cfg["method"] = args.method;
    cfg["alpha"] = args.alpha;
    if (args.method == "bootstrap") {
        cfg["B"] = args.bootstrap_b;
        cfg["seed"] = args.seed;
        cfg["literal_rule"] = args.literal_rule;
    }
    doc["config"] = std::move(cfg);
    emit(doc);
    return report.reject ? kExitReject : kExitRetain;
}

struct IndexArgs {
    std::string input, data, schema;
    std::string method = "lp";
    std::string closed_form = "auto";
    bool explain = false;
};

int run_index(const IndexArgs& args) {
    mcar::MarginalSequence seq = [&] {
        if (!args.input.empty()) {
            std::ifstream in(args.input);
            if (!in) throw mcar::IngestError("cannot open " + args.input);
            return mcar::marginal_sequence_from_json(Json::parse(in));
        }
        if (args.data.empty())
            throw mcar::DomainError("index needs --input or --data/--schema");
        return mcar::empirical_marginals(load_dataset(args.data, args.schema));
    }();

    Json doc;
    doc["version"] = kVersion;
    doc["inconsistency"] = mcar::inconsistency(seq);

    const auto drops = mcar::drop_to_fixpoint(seq);
    doc["reductions"] = drops.descriptions;
    if (args.explain) {
        const auto plan = mcar::plan_reductions(seq);
        Json explain;
        explain["drop_steps"] = plan.drop_steps;
        explain["trivial"] = plan.trivial;
        explain["condition_applicable"] = plan.condition_applicable;
        if (plan.condition_applicable) {
            Json vars = Json::array();
            for (int v : plan.condition_vars) vars.push_back(v + 1);
            explain["condition_vars"] = std::move(vars);
        }
        if (plan.cut) explain["cut_pattern"] = plan.cut->cut.label();
        doc["plan"] = std::move(explain);
    }

    const auto match =
        mcar::detect_family(drops.seq.space(), drops.seq.collection());
    if (match) doc["detected_family"] = mcar::family_name(match->tag);

    if (args.method == "lp") {
        const auto w = mcar::incompatibility_index(drops.seq);
        doc["method"] = "lp";
        doc["index"] = w.index;
        if (w.closest_compatible)
            doc["closest_compatible"] = mcar::to_json(*w.closest_compatible);
        if (w.residual) doc["residual"] = mcar::to_json(*w.residual);
        Json dual = Json::array();
        for (int s = 0; s < drops.seq.count(); ++s) {
            Json entry;
            entry["pattern"] = drops.seq.pattern(s).label();
            entry["values"] = w.dual[static_cast<std::size_t>(s)];
            dual.push_back(std::move(entry));
        }
        doc["dual_witness"] = std::move(dual);
        doc["dual_value"] = w.dual_value;
        emit(doc);
    } else if (args.method == "closed-form") {
        std::optional<mcar::FamilyMatch> use = match;
        if (args.closed_form != "auto") {
            const auto tag = mcar::family_from_name(args.closed_form);
            if (!tag)
                throw mcar::DomainError("unknown closed form '" +
                                        args.closed_form + "'");
            if (!match || match->tag != *tag)
                throw mcar::FamilyError("collection does not match family '" +
                                        args.closed_form + "'");
        }
        if (!use)
            throw mcar::FamilyError(
                "no closed form matches this pattern family; use --method lp");
        const auto cf = mcar::index_closed_form(drops.seq, *use);
        doc["method"] = "closed-form";
        doc["family"] = mcar::family_name(use->tag);
        doc["index"] = cf.index;
        doc["exact"] = cf.exact();
        emit(doc);
    } else {
        throw mcar::DomainError("unknown index method '" + args.method + "'");
    }
    return kExitRetain;
}

struct CriticalArgs {
    double alpha = 0.05;
    std::string method = "min";
    std::string patterns, sizes, ns;
    double f_prime = -1.0, d_r = 1.0;
};

int run_critical(const CriticalArgs& args) {
    const auto pats = parse_patterns(args.patterns);
    const auto sizes = parse_ints(args.sizes);
    std::vector<int> alphabet(sizes.begin(), sizes.end());
    mcar::DiscreteSpace space(alphabet);
    mcar::PatternCollection coll(pats, parse_ints(args.ns));

    std::optional<mcar::FacetInfo> facet;
    if (args.f_prime >= 0.0)
        facet = mcar::FacetInfo(args.f_prime, args.d_r,
                                mcar::FacetInfo::Source::User);
    else
        facet = mcar::facet_catalog(space, coll);

    Json doc;
    doc["version"] = kVersion;
    doc["alpha"] = args.alpha;
    if (facet) doc["facet_info"] = facet_to_json(*facet);
    if (args.method == "universal") {
        doc["c_alpha"] = mcar::c_alpha(space, coll, args.alpha);
    } else if (args.method == "improved") {
        if (!facet)
            throw mcar::DomainError(
                "no facet information: pass --Fprime/--DR or use a cataloged "
                "family");
        doc["c_alpha_prime"] =
            mcar::c_alpha_prime(space, coll, args.alpha, *facet);
    } else if (args.method == "min") {
        const auto cv = mcar::c_alpha_min(space, coll, args.alpha, facet);
        doc["c_alpha"] = cv.universal;
        if (cv.improved) doc["c_alpha_prime"] = *cv.improved;
        doc["c_alpha_min"] = cv.minimum;
        doc["active_bound"] = cv.active;
    } else {
        throw mcar::DomainError("unknown critical method '" + args.method + "'");
    }
    emit(doc);
    return kExitRetain;
}

struct FacetArgs {
    std::string patterns, sizes;
    std::string format = "both";
};

int run_facets(const FacetArgs& args) {
    const auto pats = parse_patterns(args.patterns);
    const auto sizes = parse_ints(args.sizes);
    std::vector<int> alphabet(sizes.begin(), sizes.end());
    mcar::DiscreteSpace space(alphabet);
    mcar::PatternCollection coll(pats);

    const auto fs = mcar::essential_facets_sum(space, coll);

    Json doc;
    doc["version"] = kVersion;
    doc["dimension"] = fs.dim;
    doc["essential_count"] = fs.essential_count;
    doc["consistency_equalities"] = fs.cons_equalities;
    const auto catalog = mcar::facet_catalog(space, coll);
    if (catalog) doc["catalog"] = facet_to_json(*catalog);
    Json rows = Json::array();
    for (const auto& row : fs.rows) {
        Json r;
        r["kind"] = row.kind == mcar::FacetKind::Essential ? "essential"
                    : row.kind == mcar::FacetKind::Nonnegativity
                        ? "nonnegativity"
                        : "equality";
        std::vector<std::string> coeffs;
        for (const auto& a : row.a) coeffs.push_back(a.str());
        r["a"] = coeffs;
        r["b"] = row.b.str();
        if (!row.functional.empty()) r["functional"] = row.functional;
        rows.push_back(std::move(r));
    }
    doc["rows"] = std::move(rows);

    if (args.format == "json") {
        emit(doc);
    } else if (args.format != "text" && args.format != "both") {
        throw mcar::DomainError("unknown format '" + args.format + "'");
    } else {
        std::cout << "facet system over " << fs.dim << " stacked coordinates\n";
        std::cout << "essential facets: " << fs.essential_count
                  << ", nonnegativity: "
                  << fs.rows.size() - static_cast<std::size_t>(
                                          fs.essential_count +
                                          fs.cons_equalities)
                  << ", equalities: " << fs.cons_equalities << "\n";
        if (catalog)
            std::cout << "catalog: F'=" << catalog->F_prime
                      << " D_R=" << catalog->D_R << " (" << catalog->family
                      << ")\n";
        for (const auto& row : fs.rows) {
            const char* kind = row.kind == mcar::FacetKind::Essential
                                   ? "essential    "
                               : row.kind == mcar::FacetKind::Nonnegativity
                                   ? "nonnegativity"
                                   : "equality     ";
            std::cout << kind << " [";
            for (std::size_t k = 0; k < row.a.size(); ++k)
                std::cout << (k ? " " : "") << row.a[k];
            std::cout << "] "
                      << (row.kind == mcar::FacetKind::Equality ? "=" : ">=")
                      << " " << row.b << "\n";
        }
        if (args.format == "both") emit(doc);
    }
    return kExitRetain;
}

struct SimulateArgs {
    std::string study = "rs2-power";
    int r = 2;
    int reps = 5000;
    std::uint64_t seed = 1;
    int bootstrap_b = 99;
    double alpha = 0.05;
    std::string method = "bootstrap";
    std::string grid;
    std::string out;
    int threads = 0;
    // which options were given explicitly (flags > config file > defaults)
    bool reps_set = false, seed_set = false, b_set = false, alpha_set = false,
         method_set = false;
};

int run_simulate(const SimulateArgs& args) {
    mcar::StudyConfig cfg;
    std::string method = "bootstrap";
    if (args.study == "rs2-power") {
        cfg = mcar::StudyConfig::rs2_defaults(args.r);
    } else if (args.study == "d5-power") {
        cfg = mcar::StudyConfig::d5_defaults();
    } else {
        std::ifstream in(args.study);
        if (!in)
            throw mcar::IngestError("cannot open study config " + args.study);
        const Json doc = Json::parse(in);
        const std::string family = doc.value("family", "rs2");
        cfg = family == "d5"
                  ? mcar::StudyConfig::d5_defaults()
                  : mcar::StudyConfig::rs2_defaults(doc.value("r", 2));
        if (doc.contains("grid"))
            cfg.grid = doc.at("grid").get<std::vector<double>>();
        if (doc.contains("n"))
            cfg.n_s = doc.at("n").get<std::vector<std::int64_t>>();
        if (doc.contains("reps")) cfg.replications = doc.at("reps").get<int>();
        if (doc.contains("B")) cfg.bootstrap_b = doc.at("B").get<int>();
        if (doc.contains("alpha")) cfg.alpha = doc.at("alpha").get<double>();
        if (doc.contains("seed"))
            cfg.seed = doc.at("seed").get<std::uint64_t>();
        method = doc.value("method", method);
    }
    // explicit flags win over the config file; bare defaults win for the
    // built-in studies
    const bool builtin = args.study == "rs2-power" || args.study == "d5-power";
    if (args.reps_set || builtin) cfg.replications = args.reps;
    if (args.seed_set || builtin) cfg.seed = args.seed;
    if (args.b_set || builtin) cfg.bootstrap_b = args.bootstrap_b;
    if (args.alpha_set || builtin) cfg.alpha = args.alpha;
    if (args.method_set || builtin) method = args.method;
    cfg.threads = args.threads;
    if (!args.grid.empty()) cfg.grid = parse_doubles(args.grid);

    if (method == "bootstrap")
        cfg.method = mcar::StudyConfig::Method::Bootstrap;
    else if (method == "universal")
        cfg.method = mcar::StudyConfig::Method::Universal;
    else if (method == "improved")
        cfg.method = mcar::StudyConfig::Method::Improved;
    else
        throw mcar::DomainError("unknown study method '" + method + "'");

    const auto rows = mcar::run_power_study(cfg);
    if (args.out.empty()) {
        mcar::write_study_csv(std::cout, rows);
    } else {
        std::ofstream out(args.out);
        if (!out) throw mcar::IngestError("cannot open output " + args.out);
        mcar::write_study_csv(out, rows);
        Json doc;
        doc["version"] = kVersion;
        doc["study"] = args.study;
        doc["method"] = method;
        doc["rows"] = rows.size();
        doc["replications"] = cfg.replications;
        doc["B"] = cfg.bootstrap_b;
        doc["alpha"] = cfg.alpha;
        doc["seed"] = cfg.seed;
        doc["out"] = args.out;
        emit(doc);
    }
    return kExitRetain;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "mcar: test Missing Completely At Random via marginal compatibility"};
    app.name("mcar");
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    TestArgs test_args;
    auto* test = app.add_subcommand(
        "test", "run an MCAR test on an incomplete CSV dataset");
    test->add_option("data", test_args.data, "CSV file with a header row")
        ->required();
    test->add_option("--schema", test_args.schema,
                     "schema file: one 'cat:<m>' or 'cont' line per column")
        ->required();
    test->add_option("--alpha", test_args.alpha, "significance level");
    test->add_option("--method", test_args.method,
                     "universal | improved | bootstrap | continuous");
    test->add_option("--B", test_args.bootstrap_b, "bootstrap replicates");
    test->add_option("--seed", test_args.seed, "bootstrap seed");
    test->add_option("--bandwidth", test_args.bandwidths,
                     "comma-separated bandwidths for continuous columns");
    test->add_option("--holder-r", test_args.holder_r,
                     "comma-separated smoothness exponents in (0,1]");
    test->add_option("--holder-L", test_args.holder_l, "Holder constant");
    test->add_option("--Fprime", test_args.f_prime,
                     "facet count F' for the improved critical value");
    test->add_option("--DR", test_args.d_r, "equivalence constant D_R");
    test->add_flag("--facets-from-geometry", test_args.facets_from_geometry,
                   "compute F' exactly with the geometry module");
    test->add_flag("--literal-bootstrap-rule", test_args.literal_rule,
                   "rank bootstrap statistics against R(Q-hat) with <=");
    test->add_option("--threads", test_args.threads,
                     "worker threads (0 = all cores)");
    test->add_option("--dump-marginals", test_args.dump_marginals,
                     "write the empirical marginal sequence JSON here");

    IndexArgs index_args;
    auto* index = app.add_subcommand(
        "index", "compute the incompatibility index of a marginal sequence");
    index->add_option("--input", index_args.input,
                      "marginal sequence JSON file");
    index->add_option("--data", index_args.data, "CSV file (with --schema)");
    index->add_option("--schema", index_args.schema, "schema file");
    index->add_option("--method", index_args.method, "lp | closed-form");
    index->add_option("--closed-form", index_args.closed_form,
                      "family tag or 'auto'");
    index->add_flag("--explain", index_args.explain,
                    "print the reduction plan");

    CriticalArgs critical_args;
    auto* critical =
        app.add_subcommand("critical", "print finite-sample critical values");
    critical->add_option("--alpha", critical_args.alpha, "significance level");
    critical->add_option("--method", critical_args.method,
                         "universal | improved | min");
    critical->add_option("--patterns", critical_args.patterns,
                         "patterns, e.g. 12,23,13")
        ->required();
    critical->add_option("--sizes", critical_args.sizes,
                         "alphabet sizes, e.g. 2,2,2")
        ->required();
    critical->add_option("--n", critical_args.ns,
                         "sample sizes per pattern, e.g. 200,200,200")
        ->required();
    critical->add_option("--Fprime", critical_args.f_prime, "facet count F'");
    critical->add_option("--DR", critical_args.d_r, "equivalence constant D_R");

    FacetArgs facet_args;
    auto* facets = app.add_subcommand(
        "facets", "exact essential-facet system of a pattern family");
    facets->add_option("--patterns", facet_args.patterns, "patterns")
        ->required();
    facets->add_option("--sizes", facet_args.sizes, "alphabet sizes")
        ->required();
    facets->add_option("--format", facet_args.format, "text | json | both");

    SimulateArgs sim_args;
    auto* simulate = app.add_subcommand(
        "simulate", "reproduce the power studies as CSV");
    simulate->add_option("--study", sim_args.study,
                         "rs2-power | d5-power | <config.json>");
    simulate->add_option("--r", sim_args.r, "first alphabet size (rs2, even)");
    simulate->add_option("--reps", sim_args.reps,
                         "replications per grid point");
    simulate->add_option("--seed", sim_args.seed, "master seed");
    simulate->add_option("--B", sim_args.bootstrap_b, "bootstrap replicates");
    simulate->add_option("--alpha", sim_args.alpha, "significance level");
    simulate->add_option("--method", sim_args.method,
                         "bootstrap | universal | improved");
    simulate->add_option("--grid", sim_args.grid,
                         "comma-separated parameter grid override");
    simulate->add_option("--out", sim_args.out, "output CSV path");
    simulate->add_option("--threads", sim_args.threads,
                         "worker threads (0 = all cores)");

    try {
        app.parse(argc, argv);
        sim_args.reps_set = simulate->count("--reps") > 0;
        sim_args.seed_set = simulate->count("--seed") > 0;
        sim_args.b_set = simulate->count("--B") > 0;
        sim_args.alpha_set = simulate->count("--alpha") > 0;
        sim_args.method_set = simulate->count("--method") > 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints scoped help or the error
        return code == 0 ? kExitRetain : kExitUsage;
    }

    try {
        if (test->parsed()) return run_test(test_args);
        if (index->parsed()) return run_index(index_args);
        if (critical->parsed()) return run_critical(critical_args);
        if (facets->parsed()) return run_facets(facet_args);
        if (simulate->parsed()) return run_simulate(sim_args);
        std::cerr << app.help();
        return kExitUsage;
    } catch (const mcar::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
