#include "nf/chart.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace nf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
// fallback sampling bounds for unbounded axes
constexpr double kDefaultSampleLo = -2.0;
constexpr double kDefaultSampleHi = 2.0;
}  // namespace

Chart::Chart(int dim, std::vector<std::string> names)
    : dim_(dim),
      names_(std::move(names)),
      lo_(dim, -kInf),
      hi_(dim, kInf),
      period_(dim, 0.0),
      sample_lo_(dim, kInf),
      sample_hi_(dim, -kInf) {
    if (dim < 1 || dim > kMaxDim) throw Error("chart dimension must be between 1 and 8");
    if (static_cast<int>(names_.size()) != dim) throw Error("coordinate name count mismatch");
    for (std::size_t i = 0; i < names_.size(); ++i)
        for (std::size_t j = i + 1; j < names_.size(); ++j)
            if (names_[i] == names_[j]) throw Error("coordinate names must be pairwise distinct");
}

void Chart::set_bounds(int axis, double lo, double hi) {
    if (!(lo < hi)) throw Error("domain interval must be non-empty");
    lo_[axis] = lo;
    hi_[axis] = hi;
}

void Chart::set_period(int axis, double period) {
    if (!(period > 0)) throw Error("period must be positive");
    period_[axis] = period;
}

void Chart::set_sample_bounds(int axis, double lo, double hi) {
    if (!(lo < hi)) throw Error("sample interval must be non-empty");
    sample_lo_[axis] = lo;
    sample_hi_[axis] = hi;
}

double Chart::sample_lower(int axis) const {
    if (sample_lo_[axis] < sample_hi_[axis]) return sample_lo_[axis];
    return std::isfinite(lo_[axis]) ? lo_[axis] : kDefaultSampleLo;
}

double Chart::sample_upper(int axis) const {
    if (sample_lo_[axis] < sample_hi_[axis]) return sample_hi_[axis];
    return std::isfinite(hi_[axis]) ? hi_[axis] : kDefaultSampleHi;
}

bool Chart::contains(const VecN& x) const {
    if (x.n != dim_) return false;
    for (int i = 0; i < dim_; ++i) {
        if (!std::isfinite(x[i])) return false;
        if (period_[i] > 0) continue;  // periodic axes wrap instead of bounding
        if (!(x[i] > lo_[i] && x[i] < hi_[i])) return false;
    }
    if (exclude_where_) {
        try {
            if (exclude_where_->eval(x) > 0) return false;
        } catch (const DomainError&) {
            return false;
        }
    }
    return true;
}

void Chart::require_inside(const VecN& x, const char* what) const {
    if (!contains(x)) {
        std::string msg = std::string(what) + " (";
        for (int i = 0; i < x.n; ++i) msg += (i ? ", " : "") + std::to_string(x[i]);
        msg += ") is outside the chart domain";
        throw DomainError(msg);
    }
}

double Chart::distance(const VecN& x, const VecN& y) const {
    double d = 0;
    for (int i = 0; i < dim_; ++i) {
        double di = std::abs(x[i] - y[i]);
        if (period_[i] > 0) {
            di = std::fmod(di, period_[i]);
            di = std::min(di, period_[i] - di);
        }
        d = std::max(d, di);
    }
    return d;
}

namespace {
double halton(unsigned index, unsigned base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * (index % base);
        index /= base;
    }
    return r;
}
constexpr unsigned kPrimes[kMaxDim] = {2, 3, 5, 7, 11, 13, 17, 19};
}  // namespace

std::vector<VecN> sample_domain_points(const Chart& chart, int count, unsigned seed) {
    std::vector<VecN> pts;
    pts.reserve(count);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    unsigned index = 1;
    int guard = 0;
    while (static_cast<int>(pts.size()) < count && guard < 10000 * count) {
        ++guard;
        VecN x(chart.dim());
        for (int i = 0; i < chart.dim(); ++i) {
            double lo = chart.sample_lower(i), hi = chart.sample_upper(i);
            double width = hi - lo;
            lo += 0.05 * width;  // shrink 5% per side, away from edges/singularities
            hi -= 0.05 * width;
            double u = halton(index, kPrimes[i]);
            if (seed != 0) u = std::clamp(u + jitter(rng), 0.0, 1.0);
            x[i] = lo + u * (hi - lo);
        }
        ++index;
        if (chart.contains(x)) pts.push_back(x);
    }
    if (static_cast<int>(pts.size()) < count)
        throw Error("could not draw enough sample points inside the chart domain");
    return pts;
}

}  // namespace nf
