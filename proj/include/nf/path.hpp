#pragma once
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nf/chart.hpp"
#include "nf/expr.hpp"
#include "nf/linalg.hpp"

namespace nf {

// Parametrized curve in a chart. Three backings:
//  - expression components of one parameter t (exact tangents through jets),
//  - dense uniform samples with stored tangents (cubic Hermite evaluation;
//    this is what the geodesic integrator returns),
//  - piecewise-linear polylines (the loop and grid-transport carrier).
class PathCurve {
  public:
    static PathCurve from_exprs(Chart chart, std::vector<Expression> components, double a,
                                double b);
    static PathCurve from_samples(Chart chart, double t0, double dt, std::vector<VecN> points,
                                  std::vector<VecN> tangents);
    static PathCurve polyline(Chart chart, std::vector<VecN> vertices);
    // Image of a lower-dimensional parameter path under a coordinate map
    // given by expressions (patch loops live in the ambient chart this way).
    static PathCurve mapped(Chart ambient, std::vector<Expression> map, PathCurve param_path);

    const Chart& chart() const { return chart_; }
    double t_begin() const { return a_; }
    double t_end() const { return b_; }

    VecN point(double t) const;
    void point_and_tangent(double t, VecN& x, VecN& v) const;
    // Piece-aware evaluation for integrators: at a polyline corner the
    // tangent is two-valued, and a stage evaluated exactly on the boundary
    // must use the tangent of the piece being integrated.
    void point_and_tangent_in_piece(double t, int piece, VecN& x, VecN& v) const;
    // Second parameter derivative; only available for expression paths.
    std::optional<VecN> acceleration(double t) const;

    PathCurve reversed() const;

    // Parameter values where the tangent may jump (polyline corners); the
    // integrators split their steps at these.
    std::vector<double> breakpoints() const;

    bool is_loop(double tol = 1e-12) const;

    // Approximate self-intersection scan: warns when two samples at parameter
    // separation > 1% of the range are closer than 1e-9 in coordinates.
    std::optional<std::string> injectivity_warning(int samples = 200) const;

    bool expression_backed() const { return kind_ == Kind::Expr; }
    const std::vector<Expression>& components() const { return comps_; }

  private:
    enum class Kind { Expr, Sampled, Polyline, Mapped };
    Kind kind_ = Kind::Expr;
    Chart chart_;
    double a_ = 0, b_ = 1;
    bool reversed_ = false;
    // Expr
    std::vector<Expression> comps_;
    // Sampled
    double dt_ = 0;
    std::vector<VecN> points_, tangents_;
    // Polyline
    std::vector<VecN> vertices_;
    // Mapped
    std::shared_ptr<const PathCurve> param_path_;
    std::vector<Expression> map_;

    double map_param(double t) const { return reversed_ ? a_ + b_ - t : t; }
    void eval_raw(double t, VecN& x, VecN* v, int segment_hint = -1) const;
};

// Rectangle loop in the coordinate plane (axis_a, axis_b) with corner x0 and
// side eps, traversed +b, +a, -b, -a. With this orientation the holonomy of
// a small loop satisfies Hol = I + eps^2 R(.,., a, b) + O(eps^3).
PathCurve coordinate_rectangle_loop(const Chart& chart, const VecN& x0, int axis_a, int axis_b,
                                    double eps);

// Circle along one periodic coordinate at fixed values of the others.
PathCurve coordinate_circle_loop(const Chart& chart, const VecN& base, int axis);

}  // namespace nf
