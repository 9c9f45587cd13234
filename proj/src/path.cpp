#include "nf/path.hpp"

#include <cmath>
#include <cstdio>

namespace nf {

PathCurve PathCurve::from_exprs(Chart chart, std::vector<Expression> components, double a,
                                double b) {
    if (static_cast<int>(components.size()) != chart.dim())
        throw Error("path needs one component expression per coordinate");
    if (!(a < b)) throw Error("path parameter range must be non-empty");
    PathCurve p;
    p.kind_ = Kind::Expr;
    p.chart_ = std::move(chart);
    p.comps_ = std::move(components);
    p.a_ = a;
    p.b_ = b;
    return p;
}

PathCurve PathCurve::from_samples(Chart chart, double t0, double dt, std::vector<VecN> points,
                                  std::vector<VecN> tangents) {
    if (points.size() < 2 || points.size() != tangents.size())
        throw Error("sampled path needs matching point/tangent lists with at least two samples");
    PathCurve p;
    p.kind_ = Kind::Sampled;
    p.chart_ = std::move(chart);
    p.a_ = t0;
    p.dt_ = dt;
    p.b_ = t0 + dt * (static_cast<double>(points.size()) - 1);
    p.points_ = std::move(points);
    p.tangents_ = std::move(tangents);
    return p;
}

PathCurve PathCurve::polyline(Chart chart, std::vector<VecN> vertices) {
    if (vertices.size() < 2) throw Error("polyline needs at least two vertices");
    PathCurve p;
    p.kind_ = Kind::Polyline;
    p.chart_ = std::move(chart);
    p.vertices_ = std::move(vertices);
    p.a_ = 0;
    p.b_ = static_cast<double>(p.vertices_.size() - 1);
    return p;
}

PathCurve PathCurve::mapped(Chart ambient, std::vector<Expression> map, PathCurve param_path) {
    if (static_cast<int>(map.size()) != ambient.dim())
        throw Error("coordinate map needs one expression per ambient coordinate");
    PathCurve p;
    p.kind_ = Kind::Mapped;
    p.chart_ = std::move(ambient);
    p.map_ = std::move(map);
    p.a_ = param_path.t_begin();
    p.b_ = param_path.t_end();
    p.param_path_ = std::make_shared<PathCurve>(std::move(param_path));
    return p;
}

void PathCurve::eval_raw(double t, VecN& x, VecN* v, int segment_hint) const {
    const int n = chart_.dim();
    switch (kind_) {
        case Kind::Expr: {
            x = VecN(n);
            if (v) *v = VecN(n);
            for (int i = 0; i < n; ++i) {
                if (v) {
                    double val, der;
                    comps_[i].eval1_jet(t, val, der);
                    x[i] = val;
                    (*v)[i] = der;
                } else {
                    x[i] = comps_[i].eval1(t);
                }
            }
            break;
        }
        case Kind::Sampled: {
            const int last = static_cast<int>(points_.size()) - 1;
            double u = (t - a_) / dt_;
            int i = static_cast<int>(std::floor(u));
            i = std::clamp(i, 0, last - 1);
            double s = u - i;
            double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
            double h10 = s * (1 - s) * (1 - s);
            double h01 = s * s * (3 - 2 * s);
            double h11 = s * s * (s - 1);
            x = VecN(n);
            if (v) *v = VecN(n);
            for (int c = 0; c < n; ++c) {
                x[c] = h00 * points_[i][c] + h10 * dt_ * tangents_[i][c] +
                       h01 * points_[i + 1][c] + h11 * dt_ * tangents_[i + 1][c];
                if (v) {
                    double d00 = 6 * s * (s - 1);
                    double d10 = (1 - s) * (1 - 3 * s);
                    double d01 = -d00;
                    double d11 = s * (3 * s - 2);
                    (*v)[c] = (d00 * points_[i][c] + d01 * points_[i + 1][c]) / dt_ +
                              d10 * tangents_[i][c] + d11 * tangents_[i + 1][c];
                }
            }
            break;
        }
        case Kind::Polyline: {
            const int nseg = static_cast<int>(vertices_.size()) - 1;
            int i = segment_hint >= 0 ? segment_hint : static_cast<int>(std::floor(t));
            i = std::clamp(i, 0, nseg - 1);
            double s = t - i;
            x = VecN(n);
            if (v) *v = VecN(n);
            for (int c = 0; c < n; ++c) {
                double d = vertices_[i + 1][c] - vertices_[i][c];
                x[c] = vertices_[i][c] + s * d;
                if (v) (*v)[c] = d;
            }
            break;
        }
        case Kind::Mapped: {
            VecN u, udot;
            if (v) {
                if (param_path_->reversed_)
                    param_path_->point_and_tangent(t, u, udot);
                else
                    param_path_->eval_raw(t, u, &udot, segment_hint);
            } else {
                u = param_path_->point(t);
            }
            x = VecN(n);
            if (v) *v = VecN(n);
            for (int c = 0; c < n; ++c) {
                if (v) {
                    Jet1 j = map_[c].eval_jet1(u);
                    x[c] = j.v;
                    double s = 0;
                    for (int q = 0; q < u.n; ++q) s += j.g[q] * udot[q];
                    (*v)[c] = s;
                } else {
                    x[c] = map_[c].eval(u);
                }
            }
            break;
        }
    }
}

VecN PathCurve::point(double t) const {
    VecN x;
    eval_raw(map_param(t), x, nullptr);
    return x;
}

void PathCurve::point_and_tangent(double t, VecN& x, VecN& v) const {
    eval_raw(map_param(t), x, &v);
    if (reversed_) v *= -1.0;
}

void PathCurve::point_and_tangent_in_piece(double t, int piece, VecN& x, VecN& v) const {
    int nseg = -1;
    if (kind_ == Kind::Polyline)
        nseg = static_cast<int>(vertices_.size()) - 1;
    else if (kind_ == Kind::Mapped)
        nseg = static_cast<int>(param_path_->breakpoints().size()) - 1;
    int hint = piece;
    if (reversed_ && nseg > 0) hint = nseg - 1 - piece;
    eval_raw(map_param(t), x, &v, hint);
    if (reversed_) v *= -1.0;
}

std::optional<VecN> PathCurve::acceleration(double t) const {
    if (kind_ != Kind::Expr) return std::nullopt;
    const int n = chart_.dim();
    VecN acc(n);
    for (int i = 0; i < n; ++i) {
        JetValue j = comps_[i].eval_jet(VecN{map_param(t)});
        acc[i] = j.hess(0, 0);
    }
    return acc;
}

PathCurve PathCurve::reversed() const {
    PathCurve p = *this;
    p.reversed_ = !p.reversed_;
    return p;
}

std::vector<double> PathCurve::breakpoints() const {
    if (kind_ == Kind::Mapped) return param_path_->breakpoints();
    if (kind_ != Kind::Polyline) return {a_, b_};
    std::vector<double> bp;
    for (std::size_t i = 0; i < vertices_.size(); ++i) bp.push_back(static_cast<double>(i));
    return bp;
}

bool PathCurve::is_loop(double tol) const {
    return chart_.distance(point(a_), point(b_)) < tol;
}

std::optional<std::string> PathCurve::injectivity_warning(int samples) const {
    const double len = b_ - a_;
    const bool closed = is_loop(1e-9);
    std::vector<VecN> pts(samples);
    std::vector<double> ts(samples);
    for (int i = 0; i < samples; ++i) {
        ts[i] = a_ + len * i / (samples - 1);
        pts[i] = point(ts[i]);
    }
    for (int i = 0; i < samples; ++i)
        for (int j = i + 1; j < samples; ++j) {
            double sep = ts[j] - ts[i];
            if (sep <= 0.01 * len) continue;
            if (closed && sep >= 0.99 * len) continue;  // loop endpoints coincide by design
            if (chart_.distance(pts[i], pts[j]) < 1e-9) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "path may self-intersect: points at t=%.6g and t=%.6g coincide",
                              ts[i], ts[j]);
                return std::string(buf);
            }
        }
    return std::nullopt;
}

PathCurve coordinate_rectangle_loop(const Chart& chart, const VecN& x0, int axis_a, int axis_b,
                                    double eps) {
    VecN p1 = x0, p2 = x0, p3 = x0;
    p1[axis_b] += eps;
    p2[axis_b] += eps;
    p2[axis_a] += eps;
    p3[axis_a] += eps;
    return PathCurve::polyline(chart, {x0, p1, p2, p3, x0});
}

PathCurve coordinate_circle_loop(const Chart& chart, const VecN& base, int axis) {
    if (!(chart.period(axis) > 0)) throw Error("circle loop needs a periodic coordinate");
    const int n = chart.dim();
    std::vector<Expression> comps;
    comps.reserve(n);
    for (int i = 0; i < n; ++i) {
        if (i == axis)
            comps.push_back(Expression::literal(base[i], 1) + Expression::variable(0, 1));
        else
            comps.push_back(Expression::literal(base[i], 1));
    }
    return PathCurve::from_exprs(chart, std::move(comps), 0.0, chart.period(axis));
}

}  // namespace nf
