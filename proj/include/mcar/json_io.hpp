#pragma once

// JSON interchange for marginal sequences and report structures. Keys are
// emitted in sorted order so outputs diff cleanly.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "mcar/model.hpp"

namespace mcar {

using Json = nlohmann::json;

// variable indices and categories are 1-based on the wire
inline Json to_json(const MarginalSequence& seq) {
    Json doc;
    doc["alphabet_sizes"] = seq.space().sizes();
    Json tables = Json::array();
    for (int i = 0; i < seq.count(); ++i) {
        Json t;
        std::vector<int> members;
        for (int v : seq.pattern(i).vars()) members.push_back(v + 1);
        t["members"] = members;
        t["n"] = seq.sample_size(i);
        t["mass"] = seq.table(i);
        tables.push_back(std::move(t));
    }
    doc["tables"] = std::move(tables);
    return doc;
}

inline MarginalSequence marginal_sequence_from_json(const Json& doc) {
    if (!doc.contains("alphabet_sizes") || !doc.contains("tables"))
        throw IngestError("marginal JSON needs 'alphabet_sizes' and 'tables'");
    DiscreteSpace space(doc.at("alphabet_sizes").get<std::vector<int>>());
    std::vector<Pattern> pats;
    std::vector<std::vector<double>> tables;
    std::vector<std::int64_t> ns;
    for (const auto& t : doc.at("tables")) {
        std::vector<int> members;
        for (int v : t.at("members").get<std::vector<int>>()) {
            if (v < 1 || v > space.dim())
                throw IngestError("pattern member " + std::to_string(v) +
                                  " outside 1.." + std::to_string(space.dim()));
            members.push_back(v - 1);
        }
        pats.push_back(Pattern(std::move(members)));
        tables.push_back(t.at("mass").get<std::vector<double>>());
        ns.push_back(t.contains("n") ? t.at("n").get<std::int64_t>() : 0);
    }
    return MarginalSequence(space, PatternCollection(std::move(pats),
                                                     std::move(ns)),
                            std::move(tables));
}

}  // namespace mcar
