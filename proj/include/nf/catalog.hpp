#pragma once
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nf/geometry.hpp"
#include "nf/path.hpp"

// Chart/metric/connection definitions: the JSON file format and the built-in
// catalog of worked examples the tests run against. Every entry documents its
// expected facts (flat or curved, torsion, spot values), which
// `catalog verify-all` re-derives.

namespace nf {

struct SpotCheck {
    VecN at;
    int i = 0, j = 0, k = 0;
    double value = 0;
};

struct CatalogFacts {
    std::optional<bool> flat;
    std::optional<bool> torsion_free;
    bool degenerate_metric = false;
    std::vector<SpotCheck> christoffel_spots;
};

struct CatalogEntry {
    std::string id;
    std::string title;
    Chart chart;
    std::optional<MetricField> metric;
    std::optional<ConnectionField> direct;  // set for direct-gamma definitions
    std::map<std::string, double> constants;
    std::vector<std::pair<std::string, PathCurve>> paths;
    CatalogFacts facts;
    std::string source_json;  // canonical text, hashed into reports

    const ConnectionField& conn() const;
    const PathCurve& path(const std::string& name) const;

    // populated by conn() on first use
    mutable std::optional<ConnectionField> conn_cache_;
};

// Parses a chart-definition JSON document. Field reference lives in the
// repository README; symmetry of metric text is enforced by accepting the
// upper triangle only.
CatalogEntry load_definition_text(const std::string& json_text);
CatalogEntry load_definition_file(const std::string& file_path);

const std::vector<std::string>& catalog_ids();
const CatalogEntry& catalog_get(const std::string& id);

// Re-derives every entry's documented facts; returns a list of mismatch
// descriptions (empty = all good).
std::vector<std::string> catalog_verify_all();

// FNV-1a hash of a definition's canonical text, for report provenance.
std::string definition_hash(const std::string& canonical_text);

}  // namespace nf
