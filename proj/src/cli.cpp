#include "nf/cli.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nf/catalog.hpp"
#include "nf/normal.hpp"
#include "nf/pathspace.hpp"
#include "nf/version.hpp"

namespace nf {

using json = nlohmann::ordered_json;

namespace {

// ---- serialization helpers --------------------------------------------------

json vec_json(const VecN& v) {
    json a = json::array();
    for (int i = 0; i < v.n; ++i) a.push_back(v[i]);
    return a;
}

json mat_json(const MatN& m) {
    json rows = json::array();
    for (int i = 0; i < m.n; ++i) {
        json row = json::array();
        for (int j = 0; j < m.n; ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json tensor3_json(const Tensor3N& t) {
    json out = json::array();
    for (int i = 0; i < t.n; ++i) {
        json block = json::array();
        for (int j = 0; j < t.n; ++j) {
            json row = json::array();
            for (int k = 0; k < t.n; ++k) row.push_back(t(i, j, k));
            block.push_back(row);
        }
        out.push_back(block);
    }
    return out;
}

json tensor4_json(const Tensor4N& t) {
    json out = json::array();
    for (int i = 0; i < t.n; ++i) {
        json b1 = json::array();
        for (int k = 0; k < t.n; ++k) {
            json b2 = json::array();
            for (int j = 0; j < t.n; ++j) {
                json row = json::array();
                for (int l = 0; l < t.n; ++l) row.push_back(t(i, k, j, l));
                b2.push_back(row);
            }
            b1.push_back(b2);
        }
        out.push_back(b1);
    }
    return out;
}

json report_json(const NormalityReport& rep) {
    json r;
    switch (rep.region) {
        case RegionKind::Point: r["region"] = "point"; break;
        case RegionKind::Path: r["region"] = "path"; break;
        case RegionKind::Grid: r["region"] = "grid"; break;
        case RegionKind::Patch: r["region"] = "patch"; break;
    }
    r["region_desc"] = rep.region_desc;
    r["sup_norm"] = rep.sup_norm;
    r["tolerance"] = rep.tolerance;
    r["verdict"] = rep.normal ? "normal" : "not-normal";
    r["worst_sample"] = vec_json(rep.worst_point);
    r["worst_desc"] = rep.worst_desc;
    return r;
}

std::string join_args(const std::vector<std::string>& args) {
    std::string s;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) s += ' ';
        s += args[i];
    }
    return s;
}

// ---- shared command state -----------------------------------------------------

struct Common {
    std::string catalog_id;
    std::string def_file;
    std::vector<double> at;
    double tol = 1e-6;
    int steps = 400;
    int grid = 0;
    unsigned seed = 0;
    bool csv = false;
    bool json_out = true;

    std::optional<CatalogEntry> loaded;

    const CatalogEntry& entry() {
        if (!loaded) {
            if (!def_file.empty())
                loaded = load_definition_file(def_file);
            else if (!catalog_id.empty())
                loaded = catalog_get(catalog_id);
            else
                throw CLI::ValidationError("one of --catalog or --file is required");
        }
        return *loaded;
    }
    VecN at_point() {
        const auto& e = entry();
        if (static_cast<int>(at.size()) != e.chart.dim())
            throw CLI::ValidationError("--at needs " + std::to_string(e.chart.dim()) +
                                       " coordinates");
        return VecN::from(at);
    }
};

void add_common(CLI::App* cmd, Common& c, bool with_at = true) {
    cmd->add_option("--catalog", c.catalog_id, "built-in catalog entry id");
    cmd->add_option("--file", c.def_file, "chart definition JSON file");
    if (with_at) cmd->add_option("--at", c.at, "evaluation point (chart coordinates)");
    cmd->add_option("--tol", c.tol, "tolerance for verdicts");
    cmd->add_option("--steps", c.steps, "integration step count");
    cmd->add_option("--grid", c.grid, "grid nodes per axis (0 = default)");
    cmd->add_option("--seed", c.seed, "sampling jitter seed (0 = none)");
    auto* csvf = cmd->add_flag("--csv", c.csv, "emit CSV tables");
    cmd->add_flag("--json", c.json_out, "emit JSON (default)")->excludes(csvf);
}

json envelope(const std::vector<std::string>& args, Common& c) {
    json env;
    env["schema_version"] = kSchemaVersion;
    env["tool_version"] = kToolVersion;
    env["command"] = join_args(args);
    if (c.loaded) {
        json src;
        src["id"] = c.loaded->id;
        src["hash"] = definition_hash(c.loaded->source_json);
        env["source"] = src;
    }
    env["seed"] = c.seed;
    return env;
}

PathCurve resolve_path(Common& c, const std::string& path_name,
                       const std::vector<std::string>& components,
                       const std::vector<double>& t_range) {
    const CatalogEntry& e = c.entry();
    if (!path_name.empty()) return e.path(path_name);
    if (!components.empty()) {
        if (t_range.size() != 2) throw CLI::ValidationError("--t-range needs two values");
        std::vector<Expression> comps;
        for (const auto& s : components)
            comps.push_back(Expression::parse(s, {"t"}, e.constants));
        return PathCurve::from_exprs(e.chart, std::move(comps), t_range[0], t_range[1]);
    }
    throw CLI::ValidationError("a path is required (--path or --component/--t-range)");
}

std::string format_csv(const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += header[i];
    }
    out += '\n';
    char buf[40];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

json frame_exprs_json(const FrameField& frame, const VecN& at, double tol) {
    json f;
    f["type"] = "exprs";
    json entries = json::array();
    const int n = frame.chart().dim();
    for (int a = 0; a < n; ++a) {
        json row = json::array();
        for (int k = 0; k < n; ++k) row.push_back(frame.entries()[a * n + k].render());
        entries.push_back(row);
    }
    f["coords"] = frame.chart().coord_names();
    f["entries"] = entries;
    f["region"] = {{"kind", "point"}, {"at", vec_json(at)}, {"tol", tol}};
    return f;
}

json frame_grid_json(const OpenSetFrame& osf, double tol) {
    json f;
    f["type"] = "grid";
    f["base"] = vec_json(osf.base);
    f["box_lo"] = vec_json(osf.box.lo);
    f["box_hi"] = vec_json(osf.box.hi);
    f["grid"] = osf.grid;
    json nodes = json::array(), mats = json::array();
    for (std::size_t q = 0; q < osf.nodes.size(); ++q) {
        nodes.push_back(vec_json(osf.nodes[q]));
        mats.push_back(mat_json(osf.frames[q]));
    }
    f["nodes"] = nodes;
    f["matrices"] = mats;
    f["region"] = {{"kind", "grid"}, {"tol", tol}};
    return f;
}

// ---- subcommand bodies ----------------------------------------------------------

int finish(std::ostream& out, Common& c, json& env, json results,
           const std::string& csv_text = "") {
    if (c.csv && !csv_text.empty()) {
        out << csv_text;
        return 0;
    }
    env["results"] = std::move(results);
    out << env.dump(2) << "\n";
    return 0;
}

struct PointOpts {
    bool coords = false;
    std::vector<double> basis;  // row-major n^2 for the residual family
};

struct PathCmdOpts {
    std::string path_name;
    std::vector<std::string> components;
    std::vector<double> t_range;
    std::vector<double> v0;
    int samples = 100;
};

struct HolonomyOpts {
    std::string path_name;
    std::vector<std::string> components;
    std::vector<double> t_range;
    std::vector<double> rect_at;
    std::vector<int> axes;
    double eps = 0.1;
    std::vector<double> circle_at;
    int circle_axis = -1;
};

struct GeodesicOpts {
    std::vector<double> from, velocity;
    double tmax = 1.0;
    int samples = 33;
};

struct OpenOpts {
    std::vector<double> base;
    std::vector<double> box;  // lo hi lo hi ...
    bool coords = false;
};

struct PatchOpts2 {
    std::string patch_file;
};

struct BundleOpts {
    std::string bundle_file;
    double s = 0, t = 1;
    std::vector<double> u;
    int t_samples = 9;
    std::vector<double> from, velocity;
    double tmax = 1.0;
};

struct VerifyOpts {
    std::string input;
};

struct BundleDef {
    PathCurve path;
    TransportLaw law;
};

BundleDef load_bundle(const std::string& file, Common& c) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open bundle file: " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw SchemaError("/", std::string("invalid JSON: ") + e.what());
    }
    int k = j.at("k").get<int>();
    std::map<std::string, double> constants;
    if (j.contains("constants"))
        for (auto it = j.at("constants").begin(); it != j.at("constants").end(); ++it)
            constants[it.key()] = it.value().get<double>();
    std::vector<Expression> entries;
    for (const auto& row : j.at("F"))
        for (const auto& e : row)
            entries.push_back(Expression::parse(e.get<std::string>(), {"t"}, constants));
    PathCurve path = [&]() {
        if (j.contains("catalog")) {
            c.catalog_id = j.at("catalog").get<std::string>();
            return c.entry().path(j.at("path").get<std::string>());
        }
        const json& r = j.at("range");
        Chart line(1, {"s"});
        return PathCurve::from_exprs(line, {Expression::parse("t", {"t"})}, r[0].get<double>(),
                                     r[1].get<double>());
    }();
    TransportLaw law = TransportLaw::from_generator_exprs(path, k, std::move(entries));
    return {path, law};
}

PatchSpec load_patch(const std::string& file, const CatalogEntry& entry) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open patch file: " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw SchemaError("/", std::string("invalid JSON: ") + e.what());
    }
    std::vector<std::string> params;
    for (const auto& p : j.at("params")) params.push_back(p.get<std::string>());
    Chart param(static_cast<int>(params.size()), params);
    if (j.contains("domain"))
        for (auto it = j.at("domain").begin(); it != j.at("domain").end(); ++it) {
            for (std::size_t a = 0; a < params.size(); ++a)
                if (params[a] == it.key())
                    param.set_bounds(static_cast<int>(a), it.value()[0].get<double>(),
                                     it.value()[1].get<double>());
        }
    if (j.contains("period"))
        for (auto it = j.at("period").begin(); it != j.at("period").end(); ++it)
            for (std::size_t a = 0; a < params.size(); ++a)
                if (params[a] == it.key())
                    param.set_period(static_cast<int>(a), it.value().get<double>());
    std::vector<Expression> phi;
    for (const auto& e : j.at("phi"))
        phi.push_back(Expression::parse(e.get<std::string>(), params, entry.constants));
    return PatchSpec{entry.chart, param, std::move(phi)};
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"normal frames and coordinates for linear connections"};
    app.require_subcommand(1);

    Common c;
    json produced;
    std::string csv_text;

    // every subcommand stores a closure; we run after parsing
    std::function<void()> action;

    // --- pointwise invariants ---
    auto* christoffel = app.add_subcommand("christoffel", "connection coefficients at a point");
    add_common(christoffel, c);
    christoffel->callback([&] {
        action = [&] {
            Tensor3N g = c.entry().conn().christoffels_at(c.at_point());
            produced["gamma"] = tensor3_json(g);
            produced["max_abs"] = g.max_abs();
        };
    });

    auto* torsion = app.add_subcommand("torsion", "torsion tensor at a point");
    add_common(torsion, c);
    torsion->callback([&] {
        action = [&] {
            Tensor3N t = c.entry().conn().torsion_at(c.at_point());
            produced["torsion"] = tensor3_json(t);
            produced["max_abs"] = t.max_abs();
        };
    });

    auto* curvature = app.add_subcommand("curvature", "curvature tensor at a point");
    add_common(curvature, c);
    curvature->callback([&] {
        action = [&] {
            Tensor4N r = c.entry().conn().curvature_at(c.at_point());
            produced["curvature"] = tensor4_json(r);
            produced["max_abs"] = r.max_abs();
        };
    });

    // --- path operations ---
    auto geo_opts = std::make_shared<GeodesicOpts>();
    auto* geodesic_cmd = app.add_subcommand("geodesic", "integrate the geodesic equation");
    add_common(geodesic_cmd, c, false);
    geodesic_cmd->add_option("--from", geo_opts->from, "start point")->required();
    geodesic_cmd->add_option("--velocity", geo_opts->velocity, "initial velocity")->required();
    geodesic_cmd->add_option("--tmax", geo_opts->tmax, "parameter length");
    geodesic_cmd->add_option("--samples", geo_opts->samples, "rows in the output table");
    geodesic_cmd->callback([&, geo_opts] {
        action = [&, geo_opts] {
            const CatalogEntry& e = c.entry();
            IntegrationOptions opts;
            opts.steps = c.steps;
            opts.richardson_check = true;
            GeodesicResult res = geodesic(e.conn(), VecN::from(geo_opts->from),
                                          VecN::from(geo_opts->velocity), geo_opts->tmax, opts);
            const int n = e.chart.dim();
            json samples = json::array();
            std::vector<std::vector<double>> rows;
            for (int q = 0; q < geo_opts->samples; ++q) {
                double t = geo_opts->tmax * q / (geo_opts->samples - 1);
                VecN x, v;
                res.path.point_and_tangent(t, x, v);
                json row;
                row["t"] = t;
                row["x"] = vec_json(x);
                row["v"] = vec_json(v);
                samples.push_back(row);
                std::vector<double> csv_row{t};
                for (int i = 0; i < n; ++i) csv_row.push_back(x[i]);
                for (int i = 0; i < n; ++i) csv_row.push_back(v[i]);
                rows.push_back(csv_row);
            }
            produced["samples"] = samples;
            produced["warnings"] = res.warnings;
            std::vector<std::string> header{"t"};
            for (int i = 0; i < n; ++i) header.push_back(e.chart.coord_names()[i]);
            for (int i = 0; i < n; ++i) header.push_back("v_" + e.chart.coord_names()[i]);
            csv_text = format_csv(header, rows);
        };
    });

    auto path_opts = std::make_shared<PathCmdOpts>();
    auto* transport_cmd = app.add_subcommand("transport", "parallel transport along a path");
    add_common(transport_cmd, c, false);
    transport_cmd->add_option("--path", path_opts->path_name, "catalog path name");
    transport_cmd->add_option("--component", path_opts->components, "path component expressions in t");
    transport_cmd->add_option("--t-range", path_opts->t_range, "parameter range for --component");
    transport_cmd->add_option("--v0", path_opts->v0, "initial vector")->required();
    transport_cmd->callback([&, path_opts] {
        action = [&, path_opts] {
            const CatalogEntry& e = c.entry();
            PathCurve path =
                resolve_path(c, path_opts->path_name, path_opts->components, path_opts->t_range);
            IntegrationOptions opts;
            opts.steps = c.steps;
            opts.richardson_check = true;
            VectorAlongPath res =
                parallel_transport(e.conn(), path, VecN::from(path_opts->v0), opts);
            produced["endpoint"] = vec_json(res.at_end());
            json samples = json::array();
            std::vector<std::vector<double>> rows;
            int stride = std::max<std::size_t>(1, res.ts.size() / 32);
            for (std::size_t q = 0; q < res.ts.size(); q += stride) {
                json row;
                row["t"] = res.ts[q];
                row["u"] = vec_json(res.vectors[q]);
                samples.push_back(row);
                std::vector<double> csv_row{res.ts[q]};
                for (int i = 0; i < e.chart.dim(); ++i) csv_row.push_back(res.vectors[q][i]);
                rows.push_back(csv_row);
            }
            produced["samples"] = samples;
            produced["warnings"] = res.warnings;
            std::vector<std::string> header{"t"};
            for (int i = 0; i < e.chart.dim(); ++i) header.push_back("u_" + std::to_string(i));
            csv_text = format_csv(header, rows);
        };
    });

    auto hol_opts = std::make_shared<HolonomyOpts>();
    auto* holonomy_cmd = app.add_subcommand("holonomy", "parallel transport around a loop");
    add_common(holonomy_cmd, c, false);
    holonomy_cmd->add_option("--path", hol_opts->path_name, "catalog loop path");
    holonomy_cmd->add_option("--component", hol_opts->components, "loop components in t");
    holonomy_cmd->add_option("--t-range", hol_opts->t_range, "parameter range for --component");
    holonomy_cmd->add_option("--rect-at", hol_opts->rect_at, "rectangle loop corner");
    holonomy_cmd->add_option("--axes", hol_opts->axes, "rectangle axes (two indices)");
    holonomy_cmd->add_option("--eps", hol_opts->eps, "rectangle side length");
    holonomy_cmd->add_option("--circle-at", hol_opts->circle_at, "circle base point");
    holonomy_cmd->add_option("--circle-axis", hol_opts->circle_axis, "periodic axis for the circle");
    holonomy_cmd->callback([&, hol_opts] {
        action = [&, hol_opts] {
            const CatalogEntry& e = c.entry();
            PathCurve loop = [&]() {
                if (!hol_opts->rect_at.empty()) {
                    if (hol_opts->axes.size() != 2)
                        throw CLI::ValidationError("--axes needs two indices");
                    return coordinate_rectangle_loop(e.chart, VecN::from(hol_opts->rect_at),
                                                     hol_opts->axes[0], hol_opts->axes[1],
                                                     hol_opts->eps);
                }
                if (!hol_opts->circle_at.empty())
                    return coordinate_circle_loop(e.chart, VecN::from(hol_opts->circle_at),
                                                  hol_opts->circle_axis);
                return resolve_path(c, hol_opts->path_name, hol_opts->components,
                                    hol_opts->t_range);
            }();
            IntegrationOptions opts;
            opts.steps = c.steps;
            opts.richardson_check = true;
            HolonomyResult res = holonomy(e.conn(), loop, opts);
            produced["matrix"] = mat_json(res.matrix);
            produced["defect"] = res.defect;
            produced["warnings"] = res.warnings;
        };
    });

    // --- normal constructions ---
    auto* normal = app.add_subcommand("normal", "normal frames and coordinates");
    normal->require_subcommand(1);

    auto pt_opts = std::make_shared<PointOpts>();
    auto* normal_point = normal->add_subcommand("point", "normal frame/coordinates at a point");
    add_common(normal_point, c);
    normal_point->add_flag("--coords", pt_opts->coords, "build normal coordinates instead of a frame");
    normal_point->add_option("--basis", pt_opts->basis, "constant matrix generating the family (n^2 values)");
    normal_point->callback([&, pt_opts] {
        action = [&, pt_opts] {
            const CatalogEntry& e = c.entry();
            VecN p0 = c.at_point();
            const int n = e.chart.dim();
            std::optional<MatN> B;
            if (!pt_opts->basis.empty()) {
                if (static_cast<int>(pt_opts->basis.size()) != n * n)
                    throw CLI::ValidationError("--basis needs n^2 values");
                MatN Bm(n);
                for (int q = 0; q < n * n; ++q) Bm.a[q] = pt_opts->basis[q];
                B = Bm;
            }
            double tol = c.tol == 1e-6 ? 1e-9 : c.tol;  // construction promises 1e-9 here
            if (pt_opts->coords) {
                PointCoordsOptions opts;
                if (B) opts.linear = &*B;
                CoordinateChange cc = normal_coords_at_point(e.conn(), p0, opts);
                NormalityReport rep = verify_coords_at_point(e.conn(), cc, p0, c.tol);
                json fwd = json::array();
                for (const auto& expr : cc.forward_exprs()) fwd.push_back(expr.render());
                produced["forward"] = fwd;
                produced["report"] = report_json(rep);
            } else {
                FrameField frame = normal_frame_at_point(e.conn(), p0, B ? &*B : nullptr);
                NormalityReport rep = verify_frame_at_point(e.conn(), frame, p0, tol);
                produced["frame"] = frame_exprs_json(frame, p0, tol);
                produced["report"] = report_json(rep);
            }
        };
    });

    auto np_opts = std::make_shared<PathCmdOpts>();
    auto* normal_path = normal->add_subcommand("path", "normal frame along a path");
    add_common(normal_path, c, false);
    normal_path->add_option("--path", np_opts->path_name, "catalog path name");
    normal_path->add_option("--component", np_opts->components, "path components in t");
    normal_path->add_option("--t-range", np_opts->t_range, "parameter range for --component");
    normal_path->add_option("--samples", np_opts->samples, "verification samples");
    normal_path->callback([&, np_opts] {
        action = [&, np_opts] {
            const CatalogEntry& e = c.entry();
            PathCurve path =
                resolve_path(c, np_opts->path_name, np_opts->components, np_opts->t_range);
            IntegrationOptions opts;
            opts.steps = std::max(c.steps, 1024);
            FrameAlongPath fap =
                normal_frame_along_path(e.conn(), path, MatN::identity(e.chart.dim()), opts);
            double tol = c.tol == 1e-6 ? 1e-7 : c.tol;
            NormalityReport rep = verify_frame_along_path(e.conn(), fap, tol, np_opts->samples);
            produced["report"] = report_json(rep);
            produced["warnings"] = fap.warnings;
            json mats = json::array();
            int stride = std::max<std::size_t>(1, fap.frames.ts.size() / 16);
            for (std::size_t q = 0; q < fap.frames.ts.size(); q += stride) {
                json row;
                row["t"] = fap.frames.ts[q];
                row["A"] = mat_json(fap.frames.matrices[q]);
                mats.push_back(row);
            }
            produced["frames"] = mats;
        };
    });

    auto rn_opts = std::make_shared<GeodesicOpts>();
    auto* normal_riemann = normal->add_subcommand("riemann", "Riemannian normal coordinates");
    add_common(normal_riemann, c);
    normal_riemann->add_option("--target", rn_opts->from, "report the coordinates of this point");
    normal_riemann->callback([&, rn_opts] {
        action = [&, rn_opts] {
            const CatalogEntry& e = c.entry();
            VecN p0 = c.at_point();
            RiemannNormalOptions opts;
            opts.steps = c.steps;
            RiemannNormalChart rnc = riemann_normal_coords(e.conn(), p0, nullptr, opts);
            NormalityReport rep =
                verify_coords_at_point(e.conn(), rnc.change, VecN::zero(e.chart.dim()), c.tol);
            produced["frame"] = mat_json(rnc.frame);
            produced["gram"] = vec_json(rnc.gram);
            produced["report"] = report_json(rep);
            if (!rn_opts->from.empty())
                produced["target_coords"] = vec_json(rnc.change.to_new(VecN::from(rn_opts->from)));
        };
    });

    auto fermi_opts = std::make_shared<PathCmdOpts>();
    auto* normal_fermi = normal->add_subcommand("fermi", "Fermi coordinates along a geodesic");
    add_common(normal_fermi, c, false);
    normal_fermi->add_option("--path", fermi_opts->path_name, "catalog geodesic path");
    normal_fermi->add_option("--component", fermi_opts->components, "axis components in t");
    normal_fermi->add_option("--t-range", fermi_opts->t_range, "parameter range for --component");
    normal_fermi->add_option("--samples", fermi_opts->samples, "verification samples on the axis");
    normal_fermi->callback([&, fermi_opts] {
        action = [&, fermi_opts] {
            const CatalogEntry& e = c.entry();
            PathCurve axis =
                resolve_path(c, fermi_opts->path_name, fermi_opts->components, fermi_opts->t_range);
            MatN A0 = fermi_axis_frame(e.conn(), axis);
            IntegrationOptions iopts;
            iopts.steps = std::max(c.steps, 2048);
            FrameAlongPath frame = normal_frame_along_path(e.conn(), axis, A0, iopts);
            FermiChart fermi = fermi_coords(e.conn(), axis, frame);
            NormalityReport rep =
                verify_fermi_on_axis(e.conn(), fermi, c.tol, std::min(fermi_opts->samples, 50));
            produced["report"] = report_json(rep);
        };
    });

    auto open_opts = std::make_shared<OpenOpts>();
    auto* normal_open = normal->add_subcommand("open", "normal frame/coordinates on an open box");
    add_common(normal_open, c, false);
    normal_open->add_option("--base", open_opts->base, "transport base point")->required();
    normal_open->add_option("--box", open_opts->box, "box as lo hi per axis (default: sample box)");
    normal_open->add_flag("--coords", open_opts->coords, "also integrate normal coordinates");
    normal_open->callback([&, open_opts] {
        action = [&, open_opts] {
            const CatalogEntry& e = c.entry();
            const int n = e.chart.dim();
            Box box;
            box.lo = VecN(n);
            box.hi = VecN(n);
            if (!open_opts->box.empty()) {
                if (static_cast<int>(open_opts->box.size()) != 2 * n)
                    throw CLI::ValidationError("--box needs 2n values (lo hi per axis)");
                for (int i = 0; i < n; ++i) {
                    box.lo[i] = open_opts->box[2 * i];
                    box.hi[i] = open_opts->box[2 * i + 1];
                }
            } else {
                for (int i = 0; i < n; ++i) {
                    box.lo[i] = e.chart.sample_lower(i);
                    box.hi[i] = e.chart.sample_upper(i);
                }
            }
            VecN base = VecN::from(open_opts->base);
            OpenSetOptions opts;
            opts.grid = c.grid;
            opts.tol = c.tol;
            if (open_opts->coords) {
                OpenSetCoords osc = normal_coords_on_open_set(e.conn(), box, base, opts);
                NormalityReport rep =
                    verify_frame_on_grid(e.conn(), osc.frame.field, osc.frame.nodes, c.tol);
                produced["report"] = report_json(rep);
                produced["mixed_partial_defect"] = osc.mixed_partial_defect;
                produced["frame"] = frame_grid_json(osc.frame, c.tol);
            } else {
                OpenSetFrame osf = normal_frame_on_open_set(e.conn(), box, base, opts);
                NormalityReport rep = verify_frame_on_grid(e.conn(), osf.field, osf.nodes, c.tol);
                produced["report"] = report_json(rep);
                produced["frame"] = frame_grid_json(osf, c.tol);
            }
        };
    });

    auto patch_opts = std::make_shared<PatchOpts2>();
    auto* normal_patch = normal->add_subcommand("patch", "normal frame on a submanifold patch");
    add_common(normal_patch, c, false);
    normal_patch->add_option("--patch-file", patch_opts->patch_file, "patch definition JSON")
        ->required();
    normal_patch->callback([&, patch_opts] {
        action = [&, patch_opts] {
            const CatalogEntry& e = c.entry();
            PatchSpec patch = load_patch(patch_opts->patch_file, e);
            PatchOptions opts;
            if (c.grid > 0) opts.grid = c.grid;
            opts.tol = c.tol;
            PatchFrameResult res = submanifold_normality(e.conn(), patch, opts);
            produced["report"] = report_json(res.report);
            json loops = json::array();
            for (const auto& l : res.loops) {
                json lj;
                lj["loop"] = l.description;
                lj["defect"] = l.defect;
                loops.push_back(lj);
            }
            produced["loops"] = loops;
        };
    });

    // --- bundle transports ---
    auto* bundle = app.add_subcommand("bundle", "linear transports along paths in vector bundles");
    bundle->require_subcommand(1);

    auto bt_opts = std::make_shared<BundleOpts>();
    auto* bundle_transport = bundle->add_subcommand("transport", "apply a transport law");
    add_common(bundle_transport, c, false);
    bundle_transport->add_option("--bundle-file", bt_opts->bundle_file, "generator definition")
        ->required();
    bundle_transport->add_option("--s", bt_opts->s, "source parameter");
    bundle_transport->add_option("--t", bt_opts->t, "target parameter");
    bundle_transport->add_option("--u", bt_opts->u, "fibre vector")->required();
    bundle_transport->callback([&, bt_opts] {
        action = [&, bt_opts] {
            BundleDef def = load_bundle(bt_opts->bundle_file, c);
            VecN u = VecN::from(bt_opts->u);
            produced["mapped"] = vec_json(def.law.apply(bt_opts->s, bt_opts->t, u));
            produced["matrix"] = mat_json(def.law.map(bt_opts->s, bt_opts->t));
        };
    });

    auto bd_opts = std::make_shared<BundleOpts>();
    auto* bundle_derivation = bundle->add_subcommand("derivation", "derivation coefficients");
    add_common(bundle_derivation, c, false);
    bundle_derivation->add_option("--bundle-file", bd_opts->bundle_file, "generator definition")
        ->required();
    bundle_derivation->add_option("--t-samples", bd_opts->t_samples, "sample count");
    bundle_derivation->callback([&, bd_opts] {
        action = [&, bd_opts] {
            BundleDef def = load_bundle(bd_opts->bundle_file, c);
            PathDerivation d = derivation_from_transport(def.law);
            json samples = json::array();
            std::vector<std::vector<double>> rows;
            double a = def.path.t_begin(), b = def.path.t_end();
            for (int q = 0; q < bd_opts->t_samples; ++q) {
                double t = a + (b - a) * q / (bd_opts->t_samples - 1);
                MatN g = d.coeff(t);
                json row;
                row["t"] = t;
                row["gamma"] = mat_json(g);
                samples.push_back(row);
                std::vector<double> csv_row{t};
                for (int e2 = 0; e2 < g.n * g.n; ++e2) csv_row.push_back(g.a[e2]);
                rows.push_back(csv_row);
            }
            produced["samples"] = samples;
            std::vector<std::string> header{"t"};
            for (int i = 0; i < def.law.fibre_dim(); ++i)
                for (int j = 0; j < def.law.fibre_dim(); ++j)
                    header.push_back("g_" + std::to_string(i) + std::to_string(j));
            csv_text = format_csv(header, rows);
        };
    });

    auto bn_opts = std::make_shared<BundleOpts>();
    auto* bundle_normal = bundle->add_subcommand("normal", "normal frame for a transport law");
    add_common(bundle_normal, c, false);
    bundle_normal->add_option("--bundle-file", bn_opts->bundle_file, "generator definition")
        ->required();
    bundle_normal->callback([&, bn_opts] {
        action = [&, bn_opts] {
            BundleDef def = load_bundle(bn_opts->bundle_file, c);
            auto frame = transport_normal_frame(def.law);
            double defect = transport_frame_defect(def.law, frame);
            produced["defect"] = defect;
            produced["normal"] = defect < 1e-10;
        };
    });

    auto ba_opts = std::make_shared<BundleOpts>();
    auto* bundle_auto = bundle->add_subcommand("autoparallel", "self-transported path");
    add_common(bundle_auto, c, false);
    bundle_auto->add_option("--from", ba_opts->from, "start point")->required();
    bundle_auto->add_option("--velocity", ba_opts->velocity, "initial velocity")->required();
    bundle_auto->add_option("--tmax", ba_opts->tmax, "parameter length");
    bundle_auto->callback([&, ba_opts] {
        action = [&, ba_opts] {
            const CatalogEntry& e = c.entry();
            PathCurve ap = autoparallel(e.conn(), VecN::from(ba_opts->from),
                                        VecN::from(ba_opts->velocity), ba_opts->tmax, c.steps);
            IntegrationOptions gopts;
            gopts.steps = c.steps;
            GeodesicResult geo = geodesic(e.conn(), VecN::from(ba_opts->from),
                                          VecN::from(ba_opts->velocity), ba_opts->tmax, gopts);
            double gap = 0;
            json samples = json::array();
            for (int q = 0; q <= 16; ++q) {
                double t = ba_opts->tmax * q / 16;
                VecN xa = ap.point(t), xg = geo.path.point(t);
                gap = std::max(gap, e.chart.distance(xa, xg));
                json row;
                row["t"] = t;
                row["x"] = vec_json(xa);
                samples.push_back(row);
            }
            produced["samples"] = samples;
            produced["max_gap_vs_geodesic"] = gap;
        };
    });

    // --- verify a serialized frame ---
    auto v_opts = std::make_shared<VerifyOpts>();
    auto* verify_cmd = app.add_subcommand("verify", "re-check a serialized frame");
    add_common(verify_cmd, c, false);
    verify_cmd->add_option("--input", v_opts->input, "report or frame JSON file")->required();
    verify_cmd->callback([&, v_opts] {
        action = [&, v_opts] {
            std::ifstream in(v_opts->input);
            if (!in) throw Error("cannot open input file: " + v_opts->input);
            std::stringstream ss;
            ss << in.rdbuf();
            json doc;
            try {
                doc = json::parse(ss.str());
            } catch (const json::parse_error& ex) {
                throw SchemaError("/", std::string("invalid JSON: ") + ex.what());
            }
            json f = doc.contains("results") ? doc["results"]["frame"] : doc;
            if (f.is_null()) throw SchemaError("/", "no frame object found in input");
            const CatalogEntry& e = c.entry();
            const int n = e.chart.dim();
            std::string type = f.at("type").get<std::string>();
            if (type == "exprs") {
                std::vector<Expression> entries;
                for (const auto& row : f.at("entries"))
                    for (const auto& src : row)
                        entries.push_back(Expression::parse(src.get<std::string>(),
                                                            e.chart.coord_names(), e.constants));
                FrameField frame = FrameField::from_exprs(e.chart, std::move(entries));
                VecN p0(n);
                const json& at = f.at("region").at("at");
                for (int i = 0; i < n; ++i) p0[i] = at[i].get<double>();
                double tol = f.at("region").value("tol", c.tol);
                NormalityReport rep = verify_frame_at_point(e.conn(), frame, p0, tol);
                produced["report"] = report_json(rep);
            } else if (type == "grid") {
                Box box;
                box.lo = VecN(n);
                box.hi = VecN(n);
                for (int i = 0; i < n; ++i) {
                    box.lo[i] = f.at("box_lo")[i].get<double>();
                    box.hi[i] = f.at("box_hi")[i].get<double>();
                }
                VecN base(n);
                for (int i = 0; i < n; ++i) base[i] = f.at("base")[i].get<double>();
                OpenSetOptions opts;
                opts.grid = f.at("grid").get<int>();
                OpenSetFrame osf = normal_frame_on_open_set(e.conn(), box, base, opts);
                double max_diff = 0;
                const json& mats = f.at("matrices");
                for (std::size_t q = 0; q < osf.nodes.size() && q < mats.size(); ++q) {
                    MatN stored(n);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < n; ++j) stored(i, j) = mats[q][i][j].get<double>();
                    max_diff = std::max(max_diff, max_abs_diff(stored, osf.frames[q]));
                }
                double tol = f.at("region").value("tol", c.tol);
                NormalityReport rep = verify_frame_on_grid(e.conn(), osf.field, osf.nodes, tol);
                produced["reconstruction_max_diff"] = max_diff;
                produced["matches_stored"] = max_diff < 1e-9;
                produced["report"] = report_json(rep);
            } else {
                throw SchemaError("/type", "unknown frame type '" + type + "'");
            }
        };
    });

    // --- catalog ---
    auto* catalog_cmd = app.add_subcommand("catalog", "built-in chart collection");
    catalog_cmd->require_subcommand(1);
    auto* cat_list = catalog_cmd->add_subcommand("list", "list entry ids");
    cat_list->callback([&] {
        action = [&] {
            json ids = json::array();
            for (const auto& id : catalog_ids()) ids.push_back(id);
            produced["entries"] = ids;
        };
    });
    auto show_id = std::make_shared<std::string>();
    auto* cat_show = catalog_cmd->add_subcommand("show", "show one entry definition");
    cat_show->add_option("id", *show_id, "entry id")->required();
    cat_show->callback([&, show_id] {
        action = [&, show_id] {
            const CatalogEntry& e = catalog_get(*show_id);
            produced["definition"] = json::parse(e.source_json);
            produced["hash"] = definition_hash(e.source_json);
        };
    });
    auto* cat_verify = catalog_cmd->add_subcommand("verify-all", "re-derive every entry's facts");
    cat_verify->callback([&] {
        action = [&] {
            std::vector<std::string> problems = catalog_verify_all();
            produced["entries_checked"] = catalog_ids().size();
            produced["problems"] = problems;
            produced["ok"] = problems.empty();
            if (!problems.empty()) throw Error("catalog verification failed");
        };
    });

    // ---- parse and run ----
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return 2;
    }

    json env = envelope(args, c);
    try {
        if (!action) {
            err << "no action selected\n";
            return 2;
        }
        action();
        env = envelope(args, c);  // source may have been loaded inside the action
        return finish(out, c, env, std::move(produced), csv_text);
    } catch (const CLI::ValidationError& e) {
        err << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        err << e.what() << "\n";
        return 2;
    } catch (const SyntaxError& e) {
        err << e.what() << "\n";
        return 2;
    } catch (const UnknownIdentifier& e) {
        err << e.what() << "\n";
        return 2;
    } catch (const OutOfRange& e) {
        err << e.what() << "\n";
        return 2;
    } catch (const Obstruction& e) {
        env["error"] = {{"type", "obstruction"}, {"message", e.what()}};
        if (const auto* curv = dynamic_cast<const CurvatureObstruction*>(&e)) {
            env["error"]["kind"] = "curvature";
            env["error"]["curvature_norm"] = curv->curvature_norm;
            env["error"]["worst_point"] = curv->point;
        } else if (const auto* tors = dynamic_cast<const TorsionObstruction*>(&e)) {
            env["error"]["kind"] = "torsion";
            env["error"]["torsion_norm"] = tors->torsion_norm;
            env["error"]["worst_point"] = tors->point;
            env["error"]["hint"] = tors->hint;
        } else if (const auto* hol = dynamic_cast<const HolonomyObstruction*>(&e)) {
            env["error"]["kind"] = "holonomy";
            env["error"]["defect"] = hol->defect;
            env["error"]["loop"] = hol->loop_desc;
        }
        env["results"] = std::move(produced);
        out << env.dump(2) << "\n";
        return 3;
    } catch (const Error& e) {
        env["error"] = {{"type", "error"}, {"message", e.what()}};
        env["results"] = std::move(produced);
        out << env.dump(2) << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace nf
