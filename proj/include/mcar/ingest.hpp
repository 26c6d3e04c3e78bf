#pragma once

// Parsing of incomplete tabular data, empirical marginal extraction, and
// binning of continuous coordinates onto [0,1) grids.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcar/model.hpp"

namespace mcar {

enum class ColumnKind { Categorical, Continuous };

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Categorical;
    int levels = 0;  // categorical only
};

struct Schema {
    std::vector<Column> columns;
    int dim() const { return static_cast<int>(columns.size()); }
    bool all_categorical() const {
        for (const auto& c : columns)
            if (c.kind == ColumnKind::Continuous) return false;
        return true;
    }
};

// One descriptor per line: `cat:<m>` or `cont`. Blank lines and lines
// starting with '#' are skipped. Column names come from the CSV header.
inline Schema parse_schema(std::istream& in) {
    Schema schema;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        line = line.substr(start);
        if (line[0] == '#') continue;
        Column col;
        if (line == "cont") {
            col.kind = ColumnKind::Continuous;
        } else if (line.rfind("cat:", 0) == 0) {
            col.kind = ColumnKind::Categorical;
            try {
                col.levels = std::stoi(line.substr(4));
            } catch (...) {
                throw IngestError("schema line " + std::to_string(lineno) +
                                  ": bad level count in '" + line + "'");
            }
            if (col.levels < 1)
                throw IngestError("schema line " + std::to_string(lineno) +
                                  ": level count must be positive");
        } else {
            throw IngestError("schema line " + std::to_string(lineno) +
                              ": expected 'cat:<m>' or 'cont', got '" + line +
                              "'");
        }
        schema.columns.push_back(std::move(col));
    }
    if (schema.columns.empty()) throw IngestError("schema file is empty");
    return schema;
}

struct Cell {
    bool missing = true;
    int category = 0;    // 0-based
    double value = 0.0;  // continuous
};

struct IncompleteDataset {
    Schema schema;
    std::vector<std::vector<Cell>> rows;
    std::size_t dropped_all_missing = 0;
};

namespace ingest_detail {

// RFC-4180-style field splitting with quoted fields and "" escapes.
inline std::vector<std::string> split_csv_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline bool is_missing(const std::string& field) {
    return field.empty() || field == "NA";
}

}  // namespace ingest_detail

inline IncompleteDataset parse_dataset(std::istream& csv, const Schema& schema) {
    IncompleteDataset ds;
    ds.schema = schema;
    std::string line;
    if (!std::getline(csv, line)) throw IngestError("missing CSV header row");
    const auto header = ingest_detail::split_csv_record(line);
    if (static_cast<int>(header.size()) != schema.dim())
        throw IngestError("header has " + std::to_string(header.size()) +
                          " columns, schema describes " +
                          std::to_string(schema.dim()));
    for (int c = 0; c < schema.dim(); ++c)
        ds.schema.columns[static_cast<std::size_t>(c)].name =
            header[static_cast<std::size_t>(c)];

    std::size_t rowno = 0;
    while (std::getline(csv, line)) {
        ++rowno;
        if (line.empty() || line == "\r") {
            ++ds.dropped_all_missing;
            continue;
        }
        const auto fields = ingest_detail::split_csv_record(line);
        if (static_cast<int>(fields.size()) != schema.dim())
            throw IngestError("row " + std::to_string(rowno) + " has " +
                              std::to_string(fields.size()) + " fields");
        std::vector<Cell> cells(static_cast<std::size_t>(schema.dim()));
        bool any = false;
        for (int c = 0; c < schema.dim(); ++c) {
            const auto& field = fields[static_cast<std::size_t>(c)];
            const auto& col = ds.schema.columns[static_cast<std::size_t>(c)];
            auto& cell = cells[static_cast<std::size_t>(c)];
            if (ingest_detail::is_missing(field)) continue;
            any = true;
            cell.missing = false;
            const std::string where = "row " + std::to_string(rowno) +
                                      ", column '" + col.name + "'";
            if (col.kind == ColumnKind::Categorical) {
                int v = 0;
                try {
                    std::size_t used = 0;
                    v = std::stoi(field, &used);
                    if (used != field.size()) throw std::invalid_argument(field);
                } catch (...) {
                    throw IngestError(where + ": unparseable category '" +
                                      field + "'");
                }
                if (v < 1 || v > col.levels)
                    throw IngestError(where + ": category " + std::to_string(v) +
                                      " outside 1.." +
                                      std::to_string(col.levels));
                cell.category = v - 1;
            } else {
                double v = 0.0;
                try {
                    std::size_t used = 0;
                    v = std::stod(field, &used);
                    if (used != field.size()) throw std::invalid_argument(field);
                } catch (...) {
                    throw IngestError(where + ": unparseable value '" + field +
                                      "'");
                }
                if (!(v >= 0.0) || !(v < 1.0))
                    throw IngestError(where + ": value " + std::to_string(v) +
                                      " outside [0,1)");
                cell.value = v;
            }
        }
        if (!any) {
            ++ds.dropped_all_missing;
            continue;
        }
        ds.rows.push_back(std::move(cells));
    }
    return ds;
}

struct BinningSpec {
    std::vector<double> bandwidths;   // one per continuous column, in order
    std::vector<double> holder_r;     // smoothness exponents, same order
    double holder_l = 1.0;

    BinningSpec() = default;
    BinningSpec(std::vector<double> h, std::vector<double> r, double l)
        : bandwidths(std::move(h)), holder_r(std::move(r)), holder_l(l) {
        if (holder_r.empty()) holder_r.assign(bandwidths.size(), 1.0);
        if (holder_r.size() != bandwidths.size())
            throw DomainError("one smoothness exponent per bandwidth required");
        for (double bw : bandwidths)
            if (!(bw > 0.0) || bw > 1.0)
                throw DomainError("bandwidths must lie in (0, 1]");
        for (double ex : holder_r)
            if (!(ex > 0.0) || ex > 1.0)
                throw DomainError("smoothness exponents must lie in (0, 1]");
        if (!(holder_l > 0.0)) throw DomainError("Holder constant must be > 0");
    }

    int bins(std::size_t j) const {
        return static_cast<int>(std::ceil(1.0 / bandwidths[j] - 1e-12));
    }
};

inline int continuous_column_count(const Schema& schema) {
    int n = 0;
    for (const auto& c : schema.columns) n += c.kind == ColumnKind::Continuous;
    return n;
}

// Pattern sample sizes of the dataset (patterns keyed by observed columns).
inline std::map<std::vector<int>, std::int64_t> pattern_counts(
    const IncompleteDataset& ds) {
    std::map<std::vector<int>, std::int64_t> counts;
    for (const auto& row : ds.rows) {
        std::vector<int> observed;
        for (int c = 0; c < ds.schema.dim(); ++c)
            if (!row[static_cast<std::size_t>(c)].missing) observed.push_back(c);
        ++counts[observed];
    }
    return counts;
}

// Default bandwidth h_j = n^{-1/(1+2 r_j)} with n the smallest pattern count.
inline BinningSpec default_binning(const IncompleteDataset& ds,
                                   std::vector<double> holder_r = {},
                                   double holder_l = 1.0) {
    const int d0 = continuous_column_count(ds.schema);
    if (holder_r.empty()) holder_r.assign(static_cast<std::size_t>(d0), 1.0);
    std::int64_t min_n = 0;
    for (const auto& [pat, n] : pattern_counts(ds))
        min_n = min_n == 0 ? n : std::min(min_n, n);
    if (min_n < 1) throw IngestError("dataset has no observed rows");
    std::vector<double> h(static_cast<std::size_t>(d0));
    for (int j = 0; j < d0; ++j)
        h[static_cast<std::size_t>(j)] = std::pow(
            static_cast<double>(min_n),
            -1.0 / (1.0 + 2.0 * holder_r[static_cast<std::size_t>(j)]));
    return BinningSpec(std::move(h), std::move(holder_r), holder_l);
}

// Bin k = floor(x/h) + 1, clamped into the ceil(1/h) cells of [0,1).
inline int bin_of(double x, double h, int bins) {
    const int k = static_cast<int>(std::floor(x / h)) + 1;
    return std::min(k, bins);
}

inline IncompleteDataset bin_continuous(const IncompleteDataset& ds,
                                        const BinningSpec& spec) {
    const int d0 = continuous_column_count(ds.schema);
    if (static_cast<int>(spec.bandwidths.size()) != d0)
        throw DomainError("binning spec covers " +
                          std::to_string(spec.bandwidths.size()) +
                          " continuous columns, dataset has " +
                          std::to_string(d0));
    IncompleteDataset out;
    out.schema = ds.schema;
    out.dropped_all_missing = ds.dropped_all_missing;
    std::vector<int> cont_index(static_cast<std::size_t>(ds.schema.dim()), -1);
    {
        int j = 0;
        for (int c = 0; c < ds.schema.dim(); ++c)
            if (ds.schema.columns[static_cast<std::size_t>(c)].kind ==
                ColumnKind::Continuous) {
                cont_index[static_cast<std::size_t>(c)] = j;
                auto& col = out.schema.columns[static_cast<std::size_t>(c)];
                col.kind = ColumnKind::Categorical;
                col.levels = spec.bins(static_cast<std::size_t>(j));
                ++j;
            }
    }
    out.rows = ds.rows;
    for (auto& row : out.rows) {
        for (int c = 0; c < ds.schema.dim(); ++c) {
            const int j = cont_index[static_cast<std::size_t>(c)];
            if (j < 0) continue;
            auto& cell = row[static_cast<std::size_t>(c)];
            if (cell.missing) continue;
            const int bins = spec.bins(static_cast<std::size_t>(j));
            cell.category =
                bin_of(cell.value, spec.bandwidths[static_cast<std::size_t>(j)],
                       bins) -
                1;
            cell.value = 0.0;
        }
    }
    return out;
}

// Empirical marginal tables per observed pattern, with sample sizes.
inline MarginalSequence empirical_marginals(const IncompleteDataset& ds) {
    if (!ds.schema.all_categorical())
        throw IngestError("continuous columns must be binned first");
    if (ds.rows.empty()) throw IngestError("dataset has no observed rows");

    std::vector<int> sizes;
    for (const auto& c : ds.schema.columns) sizes.push_back(c.levels);
    DiscreteSpace space(sizes);

    std::map<std::vector<int>, std::vector<std::int64_t>> counts;
    for (const auto& row : ds.rows) {
        std::vector<int> observed;
        for (int c = 0; c < ds.schema.dim(); ++c)
            if (!row[static_cast<std::size_t>(c)].missing) observed.push_back(c);
        Pattern pat(observed);
        auto [it, inserted] = counts.try_emplace(
            observed, std::vector<std::int64_t>(pattern_cells(space, pat), 0));
        std::vector<int> values;
        for (int c : observed)
            values.push_back(row[static_cast<std::size_t>(c)].category);
        ++it->second[encode_cell(space, pat, values)];
    }

    std::vector<Pattern> pats;
    std::vector<std::vector<double>> tables;
    std::vector<std::int64_t> ns;
    for (const auto& [vars, cells] : counts) {
        std::int64_t n = 0;
        for (std::int64_t c : cells) n += c;
        std::vector<double> t(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i)
            t[i] = static_cast<double>(cells[i]) / static_cast<double>(n);
        pats.push_back(Pattern(vars));
        tables.push_back(std::move(t));
        ns.push_back(n);
    }
    return MarginalSequence(space, PatternCollection(std::move(pats),
                                                     std::move(ns)),
                            std::move(tables));
}

}  // namespace mcar
