#include "nf/catalog.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nf {

using json = nlohmann::ordered_json;

namespace {

std::map<std::string, double> parse_constants(const json& j) {
    std::map<std::string, double> out;
    if (!j.contains("constants")) return out;
    const json& c = j.at("constants");
    if (!c.is_object()) throw SchemaError("/constants", "expected an object of name: value");
    for (auto it = c.begin(); it != c.end(); ++it) {
        if (!it.value().is_number())
            throw SchemaError("/constants/" + it.key(), "constant values must be numbers");
        out[it.key()] = it.value().get<double>();
    }
    return out;
}

Chart parse_chart(const json& j, const std::map<std::string, double>& constants) {
    if (!j.contains("coords") || !j.at("coords").is_array() || j.at("coords").empty())
        throw SchemaError("/coords", "expected a non-empty array of coordinate names");
    std::vector<std::string> names;
    for (const auto& c : j.at("coords")) {
        if (!c.is_string()) throw SchemaError("/coords", "coordinate names must be strings");
        names.push_back(c.get<std::string>());
    }
    Chart chart(static_cast<int>(names.size()), names);

    auto axis_of = [&](const std::string& name, const char* where) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        throw SchemaError(where, "unknown coordinate '" + name + "'");
    };
    if (j.contains("domain")) {
        for (auto it = j.at("domain").begin(); it != j.at("domain").end(); ++it) {
            const json& iv = it.value();
            if (!iv.is_array() || iv.size() != 2)
                throw SchemaError("/domain/" + it.key(), "expected [lo, hi]");
            chart.set_bounds(axis_of(it.key(), "/domain"), iv[0].get<double>(),
                             iv[1].get<double>());
        }
    }
    if (j.contains("period")) {
        for (auto it = j.at("period").begin(); it != j.at("period").end(); ++it)
            chart.set_period(axis_of(it.key(), "/period"), it.value().get<double>());
    }
    if (j.contains("sample_domain")) {
        for (auto it = j.at("sample_domain").begin(); it != j.at("sample_domain").end(); ++it) {
            const json& iv = it.value();
            if (!iv.is_array() || iv.size() != 2)
                throw SchemaError("/sample_domain/" + it.key(), "expected [lo, hi]");
            chart.set_sample_bounds(axis_of(it.key(), "/sample_domain"), iv[0].get<double>(),
                                    iv[1].get<double>());
        }
    }
    if (j.contains("exclude_where"))
        chart.set_exclusion(
            Expression::parse(j.at("exclude_where").get<std::string>(), names, constants));
    return chart;
}

MetricField parse_metric(const json& rows, const Chart& chart,
                         const std::map<std::string, double>& constants) {
    const int n = chart.dim();
    if (!rows.is_array() || static_cast<int>(rows.size()) != n)
        throw SchemaError("/metric", "expected " + std::to_string(n) + " rows");
    // row i: either the full n entries (lower triangle must repeat the upper
    // texts verbatim) or the n-i upper-triangle entries from the diagonal on
    std::vector<std::string> upper(n * (n + 1) / 2);
    auto ut = [n](int i, int jj) { return i * n - i * (i - 1) / 2 + (jj - i); };
    std::vector<std::vector<std::string>> text(n);
    for (int i = 0; i < n; ++i) {
        const json& row = rows[i];
        if (!row.is_array())
            throw SchemaError("/metric/" + std::to_string(i), "expected an array of expressions");
        for (const auto& e : row) {
            if (!e.is_string())
                throw SchemaError("/metric/" + std::to_string(i), "entries must be strings");
            text[i].push_back(e.get<std::string>());
        }
        if (static_cast<int>(text[i].size()) != n && static_cast<int>(text[i].size()) != n - i)
            throw SchemaError("/metric/" + std::to_string(i),
                              "row must have n or n-i entries (upper triangle)");
    }
    for (int i = 0; i < n; ++i)
        for (int jj = i; jj < n; ++jj) {
            const std::string& entry =
                static_cast<int>(text[i].size()) == n ? text[i][jj] : text[i][jj - i];
            upper[ut(i, jj)] = entry;
        }
    // textual symmetry check on full rows
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(text[i].size()) != n) continue;
        for (int jj = 0; jj < i; ++jj)
            if (text[i][jj] != upper[ut(jj, i)])
                throw SchemaError("/metric/" + std::to_string(i) + "/" + std::to_string(jj),
                                  "metric text must be symmetric; give the upper triangle only");
    }
    std::vector<Expression> exprs;
    exprs.reserve(upper.size());
    for (std::size_t q = 0; q < upper.size(); ++q) {
        try {
            exprs.push_back(Expression::parse(upper[q], chart.coord_names(), constants));
        } catch (const SyntaxError&) {
            throw;
        }
    }
    return MetricField(chart, std::move(exprs));
}

ConnectionField parse_gamma(const json& outer, const Chart& chart,
                            const std::map<std::string, double>& constants) {
    const int n = chart.dim();
    if (!outer.is_array() || static_cast<int>(outer.size()) != n)
        throw SchemaError("/gamma", "expected n blocks of n x n expressions");
    std::vector<Expression> gamma;
    gamma.reserve(n * n * n);
    for (int i = 0; i < n; ++i) {
        const json& block = outer[i];
        if (!block.is_array() || static_cast<int>(block.size()) != n)
            throw SchemaError("/gamma/" + std::to_string(i), "expected n rows");
        for (int jj = 0; jj < n; ++jj) {
            const json& row = block[jj];
            if (!row.is_array() || static_cast<int>(row.size()) != n)
                throw SchemaError("/gamma/" + std::to_string(i) + "/" + std::to_string(jj),
                                  "expected n entries");
            for (int k = 0; k < n; ++k)
                gamma.push_back(
                    Expression::parse(row[k].get<std::string>(), chart.coord_names(), constants));
        }
    }
    return ConnectionField::direct(chart, std::move(gamma));
}

VecN parse_vec(const json& arr, int n, const std::string& where) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != n)
        throw SchemaError(where, "expected " + std::to_string(n) + " numbers");
    VecN v(n);
    for (int i = 0; i < n; ++i) v[i] = arr[i].get<double>();
    return v;
}

}  // namespace

const ConnectionField& CatalogEntry::conn() const {
    if (!conn_cache_) {
        if (direct)
            conn_cache_ = *direct;
        else if (metric)
            conn_cache_ = ConnectionField::from_metric(*metric);
        else
            throw Error("catalog entry '" + id + "' has no metric or connection");
    }
    return *conn_cache_;
}

const PathCurve& CatalogEntry::path(const std::string& name) const {
    for (const auto& [n, p] : paths)
        if (n == name) return p;
    throw Error("catalog entry '" + id + "' has no path named '" + name + "'");
}

CatalogEntry load_definition_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError("/", std::string("invalid JSON: ") + e.what());
    }
    CatalogEntry entry;
    entry.id = j.value("id", std::string("inline"));
    entry.title = j.value("title", std::string());
    entry.constants = parse_constants(j);
    entry.chart = parse_chart(j, entry.constants);

    const bool has_metric = j.contains("metric");
    const bool has_gamma = j.contains("gamma");
    if (has_metric == has_gamma)
        throw SchemaError("/", "exactly one of 'metric' or 'gamma' is required");
    if (has_metric) entry.metric = parse_metric(j.at("metric"), entry.chart, entry.constants);
    if (has_gamma) entry.direct = parse_gamma(j.at("gamma"), entry.chart, entry.constants);

    if (j.contains("paths")) {
        for (auto it = j.at("paths").begin(); it != j.at("paths").end(); ++it) {
            const json& p = it.value();
            if (!p.contains("components") || !p.contains("range"))
                throw SchemaError("/paths/" + it.key(), "needs 'components' and 'range'");
            std::vector<Expression> comps;
            for (const auto& src : p.at("components"))
                comps.push_back(
                    Expression::parse(src.get<std::string>(), {"t"}, entry.constants));
            const json& r = p.at("range");
            entry.paths.emplace_back(
                it.key(), PathCurve::from_exprs(entry.chart, std::move(comps),
                                                r[0].get<double>(), r[1].get<double>()));
        }
    }

    if (j.contains("facts")) {
        const json& f = j.at("facts");
        if (f.contains("flat")) entry.facts.flat = f.at("flat").get<bool>();
        if (f.contains("torsion_free"))
            entry.facts.torsion_free = f.at("torsion_free").get<bool>();
        entry.facts.degenerate_metric = f.value("degenerate_metric", false);
        if (f.contains("christoffel_spots")) {
            for (const auto& s : f.at("christoffel_spots")) {
                SpotCheck spot;
                spot.at = parse_vec(s.at("at"), entry.chart.dim(), "/facts/christoffel_spots/at");
                spot.i = s.at("index")[0].get<int>();
                spot.j = s.at("index")[1].get<int>();
                spot.k = s.at("index")[2].get<int>();
                spot.value = s.at("value").get<double>();
                entry.facts.christoffel_spots.push_back(spot);
            }
        }
    }
    entry.source_json = j.dump();
    return entry;
}

CatalogEntry load_definition_file(const std::string& file_path) {
    std::ifstream in(file_path);
    if (!in) throw Error("cannot open definition file: " + file_path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_definition_text(ss.str());
}

std::string definition_hash(const std::string& canonical_text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : canonical_text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

// ---- built-in catalog --------------------------------------------------------

namespace {

const char* kEuclidean = R"json({
  "id": "euclidean-cartesian",
  "title": "Euclidean 3-space, Cartesian chart",
  "coords": ["x", "y", "z"],
  "metric": [["1", "0", "0"], ["1", "0"], ["1"]],
  "paths": {
    "p0": {"components": ["-1+2*t", "-0.5+t", "0.3-t"], "range": [0, 1]},
    "p1": {"components": ["sin(t)", "t", "cos(t)-1"], "range": [0, 1]},
    "p2": {"components": ["t", "t^2", "0.2"], "range": [0, 1]}
  },
  "facts": {"flat": true, "torsion_free": true}
})json";

const char* kPolarPlane = R"json({
  "id": "polar-plane",
  "title": "Euclidean plane in polar coordinates",
  "coords": ["r", "ph"],
  "metric": [["1", "0"], ["r^2"]],
  "domain": {"r": [0.05, 100]},
  "period": {"ph": 6.283185307179586},
  "sample_domain": {"r": [0.5, 2.5], "ph": [0.3, 5.9]},
  "paths": {
    "p0": {"components": ["0.5+t", "0.3+0.5*t"], "range": [0, 1]},
    "p1": {"components": ["1+0.3*sin(2*t)", "t"], "range": [0, 2]},
    "p2": {"components": ["1.5-0.4*t", "1+t^2"], "range": [0, 1]}
  },
  "facts": {
    "flat": true, "torsion_free": true,
    "christoffel_spots": [
      {"at": [1.0, 0.5], "index": [0, 1, 1], "value": -1.0},
      {"at": [2.0, 0.5], "index": [1, 0, 1], "value": 0.5}
    ]
  }
})json";

const char* kSphere = R"json({
  "id": "sphere",
  "title": "Unit 2-sphere, spherical chart",
  "coords": ["th", "ph"],
  "metric": [["1", "0"], ["sin(th)^2"]],
  "domain": {"th": [0.001, 3.140592653589793]},
  "period": {"ph": 6.283185307179586},
  "sample_domain": {"th": [0.4, 2.74], "ph": [0.3, 5.9]},
  "paths": {
    "p0": {"components": ["1+0.5*t", "0.7*t"], "range": [0, 1]},
    "p1": {"components": ["pi/2-0.3*t^2", "t"], "range": [0, 1.5]},
    "p2": {"components": ["1.2+0.2*sin(t)", "0.5*t"], "range": [0, 2]},
    "equator": {"components": ["pi/2", "t"], "range": [0, 6.283185307179586]},
    "latitude-pi3": {"components": ["pi/3", "t"], "range": [0, 6.283185307179586]}
  },
  "facts": {
    "flat": false, "torsion_free": true,
    "christoffel_spots": [
      {"at": [1.0471975511965976, 0.4], "index": [0, 1, 1], "value": -0.4330127018922193},
      {"at": [1.0471975511965976, 0.4], "index": [1, 0, 1], "value": 0.5773502691896257}
    ]
  }
})json";

const char* kPseudoSphere = R"json({
  "id": "pseudo-sphere",
  "title": "Hyperbolic plane (pseudo-sphere), pseudo-spherical chart",
  "coords": ["th", "ph"],
  "metric": [["1", "0"], ["sinh(th)^2"]],
  "domain": {"th": [0.01, 8]},
  "period": {"ph": 6.283185307179586},
  "sample_domain": {"th": [0.5, 2.0], "ph": [0.3, 5.9]},
  "paths": {
    "p0": {"components": ["0.8+0.5*t", "0.6*t"], "range": [0, 1]},
    "p1": {"components": ["1+0.3*t^2", "t"], "range": [0, 1.5]},
    "p2": {"components": ["1.5-0.4*t", "0.2+0.5*t"], "range": [0, 1]}
  },
  "facts": {"flat": false, "torsion_free": true}
})json";

const char* kTorus = R"json({
  "id": "torus",
  "title": "Flat two-dimensional torus, angle chart",
  "coords": ["th", "ph"],
  "metric": [["1", "0"], ["1"]],
  "period": {"th": 6.283185307179586, "ph": 6.283185307179586},
  "sample_domain": {"th": [0.3, 5.9], "ph": [0.3, 5.9]},
  "paths": {
    "p0": {"components": ["1+t", "2-0.5*t"], "range": [0, 1]},
    "p1": {"components": ["2+sin(t)", "t"], "range": [0, 2]},
    "p2": {"components": ["0.5+t^2", "1+0.3*t"], "range": [0, 1]}
  },
  "facts": {"flat": true, "torsion_free": true}
})json";

const char* kMinkowski = R"json({
  "id": "minkowski",
  "title": "Minkowski spacetime, Cartesian chart (+---)",
  "coords": ["t", "x", "y", "z"],
  "metric": [["1", "0", "0", "0"], ["-1", "0", "0"], ["-1", "0"], ["-1"]],
  "paths": {
    "p0": {"components": ["t", "0.5*t", "0.2", "0"], "range": [0, 1]},
    "p1": {"components": ["0.3*t", "sin(t)/2", "0.1*t", "0.2"], "range": [0, 1]},
    "p2": {"components": ["t^2/2", "0", "0.4*t", "0.3-0.2*t"], "range": [0, 1]}
  },
  "facts": {"flat": true, "torsion_free": true}
})json";

const char* kSchwarzschild = R"json({
  "id": "schwarzschild",
  "title": "Schwarzschild exterior, static spherical chart (+---), M = 1",
  "coords": ["t", "r", "th", "ph"],
  "constants": {"M": 1},
  "metric": [
    ["1-2*M/r", "0", "0", "0"],
    ["-1/(1-2*M/r)", "0", "0"],
    ["-r^2", "0"],
    ["-r^2*sin(th)^2"]
  ],
  "domain": {"r": [2.001, 100], "th": [0.001, 3.140592653589793]},
  "period": {"ph": 6.283185307179586},
  "sample_domain": {"t": [0, 1], "r": [4.5, 9.5], "th": [0.6, 2.5], "ph": [0.3, 5.9]},
  "paths": {
    "p0": {"components": ["0.2*t", "6-t", "pi/2", "0"], "range": [0, 1]},
    "p1": {"components": ["0.3*t", "5+0.5*sin(t)", "pi/2", "0.2*t"], "range": [0, 1]},
    "p2": {"components": ["t", "7-t", "1.2+0.1*t", "0.4"], "range": [0, 1]}
  },
  "facts": {
    "flat": false, "torsion_free": true,
    "christoffel_spots": [
      {"at": [0.0, 5.0, 1.5707963267948966, 0.0], "index": [1, 0, 0], "value": 0.024},
      {"at": [0.0, 5.0, 1.5707963267948966, 0.0], "index": [0, 0, 1], "value": 0.06666666666666667}
    ]
  }
})json";

const char* kDeSitter = R"json({
  "id": "de-sitter",
  "title": "de Sitter spacetime, spatially flat slicing (+---), H = 1",
  "coords": ["t", "x", "y", "z"],
  "metric": [
    ["1", "0", "0", "0"],
    ["-exp(2*t)", "0", "0"],
    ["-exp(2*t)", "0"],
    ["-exp(2*t)"]
  ],
  "domain": {"t": [-5, 5]},
  "sample_domain": {"t": [-0.5, 0.5], "x": [-1, 1], "y": [-1, 1], "z": [-1, 1]},
  "paths": {
    "p0": {"components": ["0.2*t", "0.5*t", "0", "0.1"], "range": [0, 1]},
    "p1": {"components": ["0.3*t", "0.1*sin(t)", "0.2*t", "0"], "range": [0, 1]},
    "p2": {"components": ["t^2/5", "0.1", "0.3*t", "0.2*t"], "range": [0, 1]}
  },
  "facts": {"flat": false, "torsion_free": true}
})json";

const char* kEinsteinStatic = R"json({
  "id": "einstein-static",
  "title": "Einstein static universe (+---), a = 1",
  "coords": ["t", "ch", "th", "ph"],
  "metric": [
    ["1", "0", "0", "0"],
    ["-1", "0", "0"],
    ["-sin(ch)^2", "0"],
    ["-(sin(ch)*sin(th))^2"]
  ],
  "domain": {"ch": [0.001, 3.140592653589793], "th": [0.001, 3.140592653589793]},
  "period": {"ph": 6.283185307179586},
  "sample_domain": {"t": [0, 1], "ch": [0.6, 2.5], "th": [0.6, 2.5], "ph": [0.3, 5.9]},
  "paths": {
    "p0": {"components": ["0.3*t", "1.2+0.3*t", "1.5", "0.4"], "range": [0, 1]},
    "p1": {"components": ["t", "1.5", "1+0.2*t", "0.5*t"], "range": [0, 1]},
    "p2": {"components": ["0.5*t", "1+0.1*sin(t)", "1.4", "t"], "range": [0, 1]}
  },
  "facts": {"flat": false, "torsion_free": true}
})json";

const char* kEinsteinDeSitter = R"json({
  "id": "einstein-de-sitter",
  "title": "Einstein-de Sitter spacetime (+---), a^2 = t^(4/3)",
  "coords": ["t", "x", "y", "z"],
  "metric": [
    ["1", "0", "0", "0"],
    ["-t^(4/3)", "0", "0"],
    ["-t^(4/3)", "0"],
    ["-t^(4/3)"]
  ],
  "domain": {"t": [0.01, 100]},
  "sample_domain": {"t": [0.8, 3], "x": [-1, 1], "y": [-1, 1], "z": [-1, 1]},
  "paths": {
    "p0": {"components": ["1+0.5*t", "0.2*t", "0", "0"], "range": [0, 1]},
    "p1": {"components": ["1.5-0.3*t", "0.1*t", "0.2*t", "0"], "range": [0, 1]},
    "p2": {"components": ["1+t^2/4", "0", "0.3*t", "0.1*t"], "range": [0, 1]}
  },
  "facts": {"flat": false, "torsion_free": true}
})json";

const char* kWeyl = R"json({
  "id": "weyl-example",
  "title": "Weyl connection on the Euclidean plane, 1-form (0, x)",
  "coords": ["x", "y"],
  "gamma": [
    [["0", "x"], ["x", "0"]],
    [["-x", "0"], ["0", "x"]]
  ],
  "sample_domain": {"x": [-1.5, 1.5], "y": [-1.5, 1.5]},
  "paths": {
    "p0": {"components": ["t-0.5", "0.3*t"], "range": [0, 1]},
    "p1": {"components": ["0.5*sin(t)", "0.5*t"], "range": [0, 1]},
    "p2": {"components": ["0.2+0.1*t", "t-0.4"], "range": [0, 1]}
  },
  "facts": {"flat": false, "torsion_free": true}
})json";

const char* kFlatWithTorsion = R"json({
  "id": "flat-with-torsion",
  "title": "Flat connection with constant torsion on the plane",
  "coords": ["x", "y"],
  "gamma": [
    [["0", "1"], ["0", "0"]],
    [["0", "0"], ["0", "0"]]
  ],
  "sample_domain": {"x": [-2, 2], "y": [-2, 2]},
  "paths": {
    "p0": {"components": ["t", "0.5-0.5*t"], "range": [0, 1]},
    "p1": {"components": ["0.4*sin(t)", "0.4*t"], "range": [0, 1]},
    "p2": {"components": ["t^2-0.5", "0.3*t"], "range": [0, 1]}
  },
  "facts": {"flat": true, "torsion_free": false}
})json";

const char* kOneDim = R"json({
  "id": "one-dim",
  "title": "One-dimensional manifold with coefficient x",
  "coords": ["x"],
  "gamma": [[["x"]]],
  "domain": {"x": [-10, 10]},
  "sample_domain": {"x": [-2, 2]},
  "paths": {
    "p0": {"components": ["t"], "range": [0, 1]},
    "p1": {"components": ["-0.5+2*t"], "range": [0, 1]},
    "p2": {"components": ["sin(t)+0.5"], "range": [0, 1]}
  },
  "facts": {"flat": true, "torsion_free": true}
})json";

// Light cone of Minkowski 2+1 space sliced as (u, v) -> (t, x, y) =
// (u, u cos v, u sin v); the induced metric du^2 - dx^2 - dy^2 degenerates
// along the generators. Loading works; coefficient evaluation reports the
// singular metric.
const char* kLightCone = R"json({
  "id": "light-cone",
  "title": "Light cone in Minkowski spacetime (degenerate induced metric)",
  "coords": ["u", "v"],
  "metric": [["0", "0"], ["-u^2"]],
  "domain": {"u": [0.01, 10]},
  "period": {"v": 6.283185307179586},
  "sample_domain": {"u": [0.5, 2], "v": [0.3, 5.9]},
  "facts": {"degenerate_metric": true}
})json";

std::vector<CatalogEntry> build_catalog() {
    std::vector<CatalogEntry> entries;
    for (const char* text :
         {kEuclidean, kPolarPlane, kSphere, kPseudoSphere, kTorus, kMinkowski, kSchwarzschild,
          kDeSitter, kEinsteinStatic, kEinsteinDeSitter, kWeyl, kFlatWithTorsion, kOneDim,
          kLightCone})
        entries.push_back(load_definition_text(text));
    return entries;
}

const std::vector<CatalogEntry>& catalog() {
    static const std::vector<CatalogEntry> entries = build_catalog();
    return entries;
}

}  // namespace

const std::vector<std::string>& catalog_ids() {
    static const std::vector<std::string> ids = [] {
        std::vector<std::string> v;
        for (const auto& e : catalog()) v.push_back(e.id);
        return v;
    }();
    return ids;
}

const CatalogEntry& catalog_get(const std::string& id) {
    for (const auto& e : catalog())
        if (e.id == id) return e;
    throw Error("no catalog entry named '" + id + "'");
}

std::vector<std::string> catalog_verify_all() {
    std::vector<std::string> problems;
    auto complain = [&](const std::string& id, const std::string& what) {
        problems.push_back(id + ": " + what);
    };
    for (const auto& entry : catalog()) {
        try {
            if (entry.facts.degenerate_metric) {
                // the documented failure mode: coefficients must raise SingularMetric
                bool raised = false;
                try {
                    VecN probe(entry.chart.dim());
                    for (int i = 0; i < entry.chart.dim(); ++i)
                        probe[i] = 0.5 * (entry.chart.sample_lower(i) + entry.chart.sample_upper(i));
                    entry.conn().christoffels_at(probe);
                } catch (const SingularMetric&) {
                    raised = true;
                }
                if (!raised) complain(entry.id, "expected SingularMetric was not raised");
                continue;
            }
            std::vector<VecN> pts = sample_domain_points(entry.chart, 20);
            const ConnectionField& conn = entry.conn();
            double max_R = 0, max_T = 0;
            for (const VecN& x : pts) {
                if (entry.metric) {
                    double det = entry.metric->scaled_det_at(x);
                    if (det <= 1e-12) complain(entry.id, "metric nearly degenerate in the domain");
                    Tensor3N g = conn.christoffels_at(x);
                    double asym = 0;
                    for (int i = 0; i < g.n; ++i)
                        for (int jj = 0; jj < g.n; ++jj)
                            for (int k = 0; k < g.n; ++k)
                                asym = std::max(asym, std::abs(g(i, jj, k) - g(i, k, jj)));
                    if (asym > 1e-10)
                        complain(entry.id, "metric-derived coefficients are not symmetric");
                }
                max_R = std::max(max_R, conn.curvature_max_at(x));
                max_T = std::max(max_T, conn.torsion_max_at(x));
            }
            if (entry.facts.flat && *entry.facts.flat != (max_R < 1e-8))
                complain(entry.id, "flatness fact mismatch (max |R| = " + std::to_string(max_R) + ")");
            if (entry.facts.torsion_free && *entry.facts.torsion_free != (max_T < 1e-10))
                complain(entry.id, "torsion fact mismatch (max |T| = " + std::to_string(max_T) + ")");
            for (const SpotCheck& s : entry.facts.christoffel_spots) {
                Tensor3N g = conn.christoffels_at(s.at);
                double got = g(s.i, s.j, s.k);
                if (std::abs(got - s.value) > 1e-9)
                    complain(entry.id, "spot value mismatch at index (" + std::to_string(s.i) + "," +
                                           std::to_string(s.j) + "," + std::to_string(s.k) +
                                           "): got " + std::to_string(got));
            }
            for (const auto& [name, path] : entry.paths) {
                VecN x = path.point(path.t_begin());
                if (!entry.chart.contains(x))
                    complain(entry.id, "path '" + name + "' starts outside the domain");
            }
        } catch (const Error& e) {
            complain(entry.id, std::string("unexpected error: ") + e.what());
        }
    }
    return problems;
}

}  // namespace nf
