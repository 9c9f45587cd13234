#include "nf/pathspace.hpp"

#include <cmath>
#include <random>

#include "nf/integrate.hpp"

namespace nf {

TransportLaw TransportLaw::from_generator_exprs(PathCurve path, int k,
                                                std::vector<Expression> entries) {
    if (static_cast<int>(entries.size()) != k * k)
        throw Error("generator needs k*k entry expressions");
    if (k < 1 || k > kMaxDim) throw Error("fibre dimension must be between 1 and 8");
    TransportLaw law;
    law.path_ = std::move(path);
    law.k_ = k;
    law.entries_ = std::move(entries);
    law.generator_at(law.path_.t_begin());  // reject immediately singular generators
    return law;
}

TransportLaw TransportLaw::from_connection(const ConnectionField& c, PathCurve path, int steps) {
    TransportLaw law;
    law.k_ = c.chart().dim();
    IntegrationOptions opts;
    opts.steps = steps;
    law.samples_ = transport_matrix(c, path, MatN::identity(law.k_), opts);
    law.path_ = std::move(path);
    return law;
}

void TransportLaw::check_range(double t) const {
    if (t < path_.t_begin() - 1e-12 || t > path_.t_end() + 1e-12)
        throw OutOfRange("parameter " + std::to_string(t) + " outside the path range");
}

MatN TransportLaw::generator_at(double t) const {
    check_range(t);
    MatN F(k_);
    if (!entries_.empty()) {
        for (int i = 0; i < k_; ++i)
            for (int j = 0; j < k_; ++j) F(i, j) = entries_[i * k_ + j].eval1(t);
        try {
            inverse(F, 1e-12);
        } catch (const Error&) {
            throw SingularGenerator(t);
        }
        return F;
    }
    // sampled backing stores U(t) with F = U^-1
    MatN U = samples_->at(t);
    try {
        return inverse(U, 1e-12);
    } catch (const Error&) {
        throw SingularGenerator(t);
    }
}

MatN TransportLaw::map(double s, double t) const {
    check_range(s);
    check_range(t);
    if (s == t) return MatN::identity(k_);  // identity axiom, exactly
    MatN Ft = generator_at(t);
    MatN Fs = generator_at(s);
    return inverse(Ft, 1e-12) * Fs;
}

VecN TransportLaw::apply(double s, double t, const VecN& u) const { return map(s, t) * u; }

MatN TransportLaw::derivation_coeff_at(double t) const {
    check_range(t);
    MatN F(k_), Fdot(k_);
    if (!entries_.empty()) {
        for (int i = 0; i < k_; ++i)
            for (int j = 0; j < k_; ++j) {
                double v, d;
                entries_[i * k_ + j].eval1_jet(t, v, d);
                F(i, j) = v;
                Fdot(i, j) = d;
            }
    } else {
        // F = U^-1 along the stored samples; differentiate F by a 4th-order
        // central stencil over the sample grid
        const auto& ts = samples_->ts;
        const double h = ts[1] - ts[0];
        double lo = ts.front() + 2 * h, hi = ts.back() - 2 * h;
        double tc = std::clamp(t, lo, hi);
        auto Fat = [&](double q) { return inverse(samples_->at(q), 1e-12); };
        F = Fat(tc);
        MatN fp1 = Fat(tc + h), fp2 = Fat(tc + 2 * h), fm1 = Fat(tc - h), fm2 = Fat(tc - 2 * h);
        for (int e = 0; e < k_ * k_; ++e)
            Fdot.a[e] = (-fp2.a[e] + 8 * fp1.a[e] - 8 * fm1.a[e] + fm2.a[e]) / (12 * h);
    }
    try {
        return inverse(F, 1e-12) * Fdot;
    } catch (const Error&) {
        throw SingularGenerator(t);
    }
}

PathDerivation derivation_from_transport(const TransportLaw& law) {
    TransportLaw copy = law;
    return {law.path(), law.fibre_dim(),
            [copy](double t) { return copy.derivation_coeff_at(t); }};
}

MatN integrate_derivation(const PathDerivation& d, double s, double t, int steps) {
    const int k = d.k;
    std::array<double, kMaxDim * kMaxDim> state{};
    for (int i = 0; i < k; ++i) state[i * k + i] = 1.0;
    auto rhs = [&](double tau, const double* y, double* dy) {
        MatN g = d.coeff(tau);
        for (int col = 0; col < k; ++col)
            for (int i = 0; i < k; ++i) {
                double acc = 0;
                for (int j = 0; j < k; ++j) acc += g(i, j) * y[j * k + col];
                dy[i * k + col] = -acc;
            }
    };
    std::span<double> y(state.data(), k * k);
    rk4_integrate(rhs, y, s, t, steps);
    MatN out(k);
    for (int e = 0; e < k * k; ++e) out.a[e] = state[e];
    return out;
}

std::function<MatN(double)> transport_normal_frame(const TransportLaw& law) {
    TransportLaw copy = law;
    return [copy](double t) { return inverse(copy.generator_at(t), 1e-12); };
}

double transport_frame_defect(const TransportLaw& law, const std::function<MatN(double)>& frame,
                              int sample_pairs) {
    const double a = law.path().t_begin(), b = law.path().t_end();
    const int k = law.fibre_dim();
    double worst = 0;
    for (int q = 0; q < sample_pairs; ++q) {
        // deterministic lattice of (s, t) pairs covering the range
        double s = a + (b - a) * ((q * 7) % sample_pairs + 0.5) / sample_pairs;
        double t = a + (b - a) * ((q * 3 + 1) % sample_pairs + 0.5) / sample_pairs;
        MatN Lp = inverse(frame(t), 1e-12) * law.map(s, t) * frame(s);
        worst = std::max(worst, max_abs_diff(Lp, MatN::identity(k)));
    }
    return worst;
}

LinearityCheckResult tangent_transport_linearity_check(const Chart& chart,
                                                       const TangentCoeffFn& coeff,
                                                       const std::vector<VecN>& points,
                                                       unsigned seed, double tol) {
    const int n = chart.dim();
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    LinearityCheckResult out;
    double defect = 0;
    for (const VecN& x : points) {
        for (int trial = 0; trial < 4; ++trial) {
            VecN u(n), w(n);
            for (int i = 0; i < n; ++i) {
                u[i] = dist(rng);
                w[i] = dist(rng);
            }
            double alpha = dist(rng), beta = dist(rng);
            if (trial == 0) alpha = -1.0;  // catch affine offsets on sign flips
            MatN lhs = coeff(x, alpha * u + beta * w);
            MatN rhs = alpha * coeff(x, u) + (beta * coeff(x, w));
            defect = std::max(defect, max_abs_diff(lhs, rhs));
        }
    }
    out.max_defect = defect;
    out.linear = defect < tol;
    if (out.linear) {
        // Gamma(i,j,k) = coeff(x, e_j)(i,k) on basis tangents
        TangentCoeffFn fn = coeff;
        out.extracted = ConnectionField::from_callable(
            chart,
            [fn, n](const VecN& x) {
                Tensor3N gamma(n);
                for (int j = 0; j < n; ++j) {
                    MatN m = fn(x, VecN::basis(n, j));
                    for (int i = 0; i < n; ++i)
                        for (int k = 0; k < n; ++k) gamma(i, j, k) = m(i, k);
                }
                return gamma;
            },
            1e-5);
    }
    return out;
}

MatN transport_curvature(const ConnectionField& c, const VecN& x0, int axis_a, int axis_b,
                         double eps, int steps) {
    PathCurve loop = coordinate_rectangle_loop(c.chart(), x0, axis_a, axis_b, eps);
    IntegrationOptions opts;
    opts.steps = steps;
    HolonomyResult h = holonomy(c, loop, opts);
    const int n = c.chart().dim();
    MatN out(n);
    for (int e = 0; e < n * n; ++e)
        out.a[e] = (h.matrix.a[e] - MatN::identity(n).a[e]) / (eps * eps);
    return out;
}

PathCurve autoparallel(const ConnectionField& c, const VecN& x0, const VecN& v0, double t_max,
                       int steps) {
    const int n = c.chart().dim();
    // route through the 2-index coefficient of the induced transport,
    // independent of the geodesic solver's contraction order
    auto coeff = [&](const VecN& x, const VecN& xdot) {
        Tensor3N gamma = c.christoffels_at(x);
        MatN m(n);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) {
                double s = 0;
                for (int j = 0; j < n; ++j) s += gamma(i, j, k) * xdot[j];
                m(i, k) = s;
            }
        return m;
    };
    std::array<double, 2 * kMaxDim> state{};
    for (int i = 0; i < n; ++i) {
        state[i] = x0[i];
        state[n + i] = v0[i];
    }
    auto rhs = [&](double t, const double* y, double* dy) {
        VecN x(n), v(n);
        for (int i = 0; i < n; ++i) {
            x[i] = y[i];
            v[i] = y[n + i];
        }
        MatN m;
        try {
            m = coeff(x, v);
        } catch (const DomainError&) {
            throw DomainExit(t, "autoparallel left the chart domain");
        }
        VecN acc = m * v;
        for (int i = 0; i < n; ++i) {
            dy[i] = v[i];
            dy[n + i] = -acc[i];
        }
    };
    std::vector<VecN> xs, vs;
    auto record = [&](std::span<double> y) {
        VecN x(n), v(n);
        for (int i = 0; i < n; ++i) {
            x[i] = y[i];
            v[i] = y[n + i];
        }
        xs.push_back(x);
        vs.push_back(v);
    };
    std::span<double> y(state.data(), 2 * n);
    c.chart().require_inside(x0, "autoparallel start");
    rk4_integrate(rhs, y, 0.0, t_max, steps, [&](int step, double t, std::span<double> s) {
        for (int i = 0; i < 2 * n; ++i)
            if (!std::isfinite(s[i])) throw NonFinite(t);
        (void)step;
        record(s);
    });
    double dt = t_max / steps;
    return PathCurve::from_samples(c.chart(), 0.0, dt, xs, vs);
}

}  // namespace nf
