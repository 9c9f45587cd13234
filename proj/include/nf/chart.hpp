#pragma once
#include <optional>
#include <string>
#include <vector>

#include "nf/expr.hpp"
#include "nf/linalg.hpp"

namespace nf {

// A single coordinate chart: dimension, coordinate names, and an optional
// domain given as per-coordinate open intervals plus an exclusion predicate
// (points with exclude_where > 0 are outside the domain). Coordinates may be
// declared periodic (period > 0), which the loop-closure and distance
// helpers honor; angle charts need this so that loops close in coordinates.
class Chart {
  public:
    Chart() = default;
    Chart(int dim, std::vector<std::string> names);

    int dim() const { return dim_; }
    const std::vector<std::string>& coord_names() const { return names_; }

    void set_bounds(int axis, double lo, double hi);
    void set_period(int axis, double period);
    void set_exclusion(Expression e) { exclude_where_ = std::move(e); }
    // Bounded box used when drawing verification samples (may be tighter
    // than the domain, which can be unbounded).
    void set_sample_bounds(int axis, double lo, double hi);

    double lower(int axis) const { return lo_[axis]; }
    double upper(int axis) const { return hi_[axis]; }
    double period(int axis) const { return period_[axis]; }
    double sample_lower(int axis) const;
    double sample_upper(int axis) const;

    bool contains(const VecN& x) const;
    // Throws DomainError when x is outside the chart domain.
    void require_inside(const VecN& x, const char* what = "point") const;

    // Sup-norm coordinate distance, reduced modulo declared periods.
    double distance(const VecN& x, const VecN& y) const;

  private:
    int dim_ = 0;
    std::vector<std::string> names_;
    std::vector<double> lo_, hi_;          // domain box (±inf when open)
    std::vector<double> period_;           // 0 = aperiodic
    std::vector<double> sample_lo_, sample_hi_;
    std::optional<Expression> exclude_where_;
};

// Deterministic low-discrepancy points inside the chart's sampling box,
// shrunk by 5% per side, rejecting excluded points. seed != 0 adds a small
// reproducible jitter on top of the Halton sequence.
std::vector<VecN> sample_domain_points(const Chart& chart, int count, unsigned seed = 0);

}  // namespace nf
