#include "nf/transport.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "nf/integrate.hpp"

namespace nf {

namespace {

constexpr int kMaxStoredSamples = 4096;

// Transport matrix M(i,k) = Gamma(i,j,k) tangent^j at a path point.
MatN transport_matrix_at(const ConnectionField& c, const VecN& x, const VecN& tangent) {
    const int n = x.n;
    Tensor3N gamma = c.christoffels_at(x);
    MatN m(n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double s = 0;
            for (int j = 0; j < n; ++j) s += gamma(i, j, k) * tangent[j];
            m(i, k) = s;
        }
    return m;
}

struct PiecePlan {
    double t0, t1;
    int steps;
};

// Splits integration at tangent discontinuities (polyline corners) and keeps
// the step size uniform across pieces so stored samples stay equidistant.
std::vector<PiecePlan> plan_pieces(const PathCurve& path, int total_steps) {
    std::vector<double> bp = path.breakpoints();
    const int npieces = static_cast<int>(bp.size()) - 1;
    int per_piece = (total_steps + npieces - 1) / npieces;
    per_piece = std::max(per_piece, 8);
    std::vector<PiecePlan> plan;
    plan.reserve(npieces);
    for (int i = 0; i < npieces; ++i) plan.push_back({bp[i], bp[i + 1], per_piece});
    return plan;
}

// Generic matrix-state transport over a path: dU/dt = -M(t) U, recording at a
// uniform stride. VecN transport uses a one-column matrix path for the same
// code. Returns all recorded samples plus exact derivatives there.
struct TransportRecording {
    std::vector<double> ts;
    std::vector<MatN> us;
    std::vector<MatN> dus;
};

TransportRecording integrate_transport(const ConnectionField& c, const PathCurve& path,
                                       const MatN& u0, int total_steps, bool record_dense) {
    const int n = c.chart().dim();
    auto plan = plan_pieces(path, total_steps);
    long long all_steps = 0;
    for (auto& p : plan) all_steps += p.steps;
    int stride;
    if (record_dense) {
        stride = static_cast<int>((all_steps + kMaxStoredSamples - 1) / kMaxStoredSamples);
        for (auto& p : plan)
            p.steps = ((p.steps + stride - 1) / stride) * stride;  // stride divides each piece
    } else {
        stride = std::numeric_limits<int>::max();  // endpoints only
    }

    int current_piece = 0;
    auto rhs = [&](double t, const double* y, double* dy) {
        VecN x, tan;
        path.point_and_tangent_in_piece(t, current_piece, x, tan);
        MatN m;
        try {
            m = transport_matrix_at(c, x, tan);
        } catch (const DomainError&) {
            throw DomainExit(t);
        }
        for (int col = 0; col < n; ++col)
            for (int i = 0; i < n; ++i) {
                double s = 0;
                for (int k = 0; k < n; ++k) s += m(i, k) * y[k * n + col];
                dy[i * n + col] = -s;
            }
    };

    TransportRecording rec;
    std::array<double, kMaxDim * kMaxDim> state{};
    for (int i = 0; i < n * n; ++i) state[i] = u0.a[i];
    std::span<double> y(state.data(), n * n);

    auto record = [&](double t) {
        MatN u(n);
        for (int i = 0; i < n * n; ++i) u.a[i] = state[i];
        std::array<double, kMaxDim * kMaxDim> d{};
        rhs(t, state.data(), d.data());
        MatN du(n);
        for (int i = 0; i < n * n; ++i) du.a[i] = d[i];
        rec.ts.push_back(t);
        rec.us.push_back(u);
        rec.dus.push_back(du);
    };

    VecN start = path.point(path.t_begin());
    c.chart().require_inside(start, "path start");
    record(path.t_begin());

    for (std::size_t pi = 0; pi < plan.size(); ++pi) {
        const auto& p = plan[pi];
        current_piece = static_cast<int>(pi);
        rk4_integrate(rhs, y, p.t0, p.t1, p.steps, [&](int step, double t, std::span<double> s) {
            if (step == 0) return;
            for (int i = 0; i < n * n; ++i)
                if (!std::isfinite(s[i])) throw NonFinite(t);
            VecN x = path.point(t);
            if (!c.chart().contains(x)) throw DomainExit(t);
            bool last = (pi + 1 == plan.size()) && step == p.steps;
            if (step % stride == 0 || last) {
                if (t > rec.ts.back()) record(t);
            }
        });
    }
    return rec;
}

std::string richardson_warning(double est_error, double tol) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "estimated integration error %.3e exceeds tolerance %.3e; increase --steps",
                  est_error, tol);
    return buf;
}

}  // namespace

VectorAlongPath parallel_transport(const ConnectionField& c, const PathCurve& path, const VecN& v0,
                                   const IntegrationOptions& opts) {
    if (opts.steps < 16) throw OutOfRange("parallel transport needs at least 16 steps");
    const int n = c.chart().dim();
    MatN u0(n);
    for (int i = 0; i < n; ++i) u0(i, 0) = v0[i];
    // one meaningful column; the rest stay zero
    TransportRecording rec = integrate_transport(c, path, u0, opts.steps, true);
    VectorAlongPath out;
    out.ts = rec.ts;
    out.vectors.reserve(rec.us.size());
    for (const MatN& u : rec.us) {
        VecN v(n);
        for (int i = 0; i < n; ++i) v[i] = u(i, 0);
        out.vectors.push_back(v);
    }
    if (opts.richardson_check) {
        TransportRecording fine = integrate_transport(c, path, u0, 2 * opts.steps, false);
        double diff = 0;
        for (int i = 0; i < n; ++i)
            diff = std::max(diff, std::abs(fine.us.back()(i, 0) - rec.us.back()(i, 0)));
        double est = diff / 15.0;  // order-4 Richardson estimate
        if (est > opts.warn_tol) out.warnings.push_back(richardson_warning(est, opts.warn_tol));
    }
    return out;
}

MatN MatrixAlongPath::at(double t) const {
    MatN u, du;
    at_with_deriv(t, u, du);
    return u;
}

void MatrixAlongPath::at_with_deriv(double t, MatN& U, MatN& Udot) const {
    const int last = static_cast<int>(ts.size()) - 1;
    const double h = (ts.back() - ts.front()) / last;
    int i = static_cast<int>(std::floor((t - ts.front()) / h));
    i = std::clamp(i, 0, last - 1);
    double s = (t - ts[i]) / h;
    const int n = matrices.front().n;
    U = MatN(n);
    Udot = MatN(n);
    double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    double h10 = s * (1 - s) * (1 - s);
    double h01 = s * s * (3 - 2 * s);
    double h11 = s * s * (s - 1);
    double d00 = 6 * s * (s - 1), d10 = (1 - s) * (1 - 3 * s), d01 = -d00, d11 = s * (3 * s - 2);
    for (int e = 0; e < n * n; ++e) {
        U.a[e] = h00 * matrices[i].a[e] + h10 * h * derivatives[i].a[e] +
                 h01 * matrices[i + 1].a[e] + h11 * h * derivatives[i + 1].a[e];
        Udot.a[e] = (d00 * matrices[i].a[e] + d01 * matrices[i + 1].a[e]) / h +
                    d10 * derivatives[i].a[e] + d11 * derivatives[i + 1].a[e];
    }
}

MatrixAlongPath transport_matrix(const ConnectionField& c, const PathCurve& path, const MatN& U0,
                                 const IntegrationOptions& opts) {
    TransportRecording rec = integrate_transport(c, path, U0, opts.steps, true);
    MatrixAlongPath out;
    out.ts = std::move(rec.ts);
    out.matrices = std::move(rec.us);
    out.derivatives = std::move(rec.dus);
    if (opts.richardson_check) {
        TransportRecording fine = integrate_transport(c, path, U0, 2 * opts.steps, false);
        double est = max_abs_diff(fine.us.back(), out.matrices.back()) / 15.0;
        if (est > opts.warn_tol) out.warnings.push_back(richardson_warning(est, opts.warn_tol));
    }
    return out;
}

namespace {

struct GeodesicRecording {
    std::vector<double> ts;
    std::vector<VecN> xs, vs;
};

GeodesicRecording integrate_geodesic(const ConnectionField& c, const VecN& x0, const VecN& v0,
                                     double t_max, int steps, bool record_dense) {
    const int n = c.chart().dim();
    auto rhs = [&](double t, const double* y, double* dy) {
        VecN x(n), v(n);
        for (int i = 0; i < n; ++i) {
            x[i] = y[i];
            v[i] = y[n + i];
        }
        Tensor3N gamma;
        try {
            gamma = c.christoffels_at(x);
        } catch (const DomainError&) {
            throw DomainExit(t, "geodesic left the chart domain");
        }
        for (int i = 0; i < n; ++i) {
            dy[i] = v[i];
            double acc = 0;
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) acc += gamma(i, j, k) * v[j] * v[k];
            dy[n + i] = -acc;
        }
    };

    int stride = record_dense ? std::max(1, steps / kMaxStoredSamples) : steps;
    int padded = ((steps + stride - 1) / stride) * stride;

    std::array<double, 2 * kMaxDim> state{};
    for (int i = 0; i < n; ++i) {
        state[i] = x0[i];
        state[n + i] = v0[i];
    }
    std::span<double> y(state.data(), 2 * n);
    GeodesicRecording rec;
    auto record = [&](double t) {
        VecN x(n), v(n);
        for (int i = 0; i < n; ++i) {
            x[i] = state[i];
            v[i] = state[n + i];
        }
        rec.ts.push_back(t);
        rec.xs.push_back(x);
        rec.vs.push_back(v);
    };
    c.chart().require_inside(x0, "geodesic start");
    record(0.0);
    rk4_integrate(rhs, y, 0.0, t_max, padded, [&](int step, double t, std::span<double> s) {
        if (step == 0) return;
        VecN x(n);
        for (int i = 0; i < n; ++i) {
            if (!std::isfinite(s[i]) || !std::isfinite(s[n + i])) throw NonFinite(t);
            x[i] = s[i];
        }
        if (!c.chart().contains(x)) throw DomainExit(t, "geodesic left the chart domain");
        if (step % stride == 0) record(t);
    });
    return rec;
}

}  // namespace

GeodesicResult geodesic(const ConnectionField& c, const VecN& x0, const VecN& v0, double t_max,
                        const IntegrationOptions& opts) {
    GeodesicRecording rec = integrate_geodesic(c, x0, v0, t_max, opts.steps, true);
    double dt = rec.ts.size() > 1 ? rec.ts[1] - rec.ts[0] : t_max;
    GeodesicResult out{PathCurve::from_samples(c.chart(), 0.0, dt, rec.xs, rec.vs), {}};
    if (opts.richardson_check) {
        GeodesicRecording fine = integrate_geodesic(c, x0, v0, t_max, 2 * opts.steps, false);
        double diff = 0;
        for (int i = 0; i < c.chart().dim(); ++i)
            diff = std::max(diff, std::abs(fine.xs.back()[i] - rec.xs.back()[i]));
        double est = diff / 15.0;
        if (est > opts.warn_tol) out.warnings.push_back(richardson_warning(est, opts.warn_tol));
    }
    return out;
}

VecN exp_map(const ConnectionField& c, const VecN& x0, const VecN& v,
             const IntegrationOptions& opts) {
    if (v.norm_inf() == 0.0) {  // exp_x0(0) = x0 exactly
        c.chart().require_inside(x0, "exponential-map base point");
        return x0;
    }
    GeodesicRecording rec = integrate_geodesic(c, x0, v, 1.0, opts.steps, false);
    return rec.xs.back();
}

GeodesicWithVariations geodesic_with_variations(const ConnectionField& c, const VecN& x0,
                                                const VecN& v0,
                                                const std::vector<GeodesicVariation>& variations,
                                                double t_end, const IntegrationOptions& opts) {
    const int n = c.chart().dim();
    const int nv = static_cast<int>(variations.size());
    const int m = 2 * n + 2 * n * nv;
    if (m > kMaxState) throw OutOfRange("too many geodesic variations");

    // state: x, v, then per variation (dx, dv)
    auto rhs = [&](double t, const double* y, double* dy) {
        VecN x(n), v(n);
        for (int i = 0; i < n; ++i) {
            x[i] = y[i];
            v[i] = y[n + i];
        }
        Tensor3N gamma;
        Tensor4N dgamma;
        try {
            c.christoffels_with_grad(x, gamma, dgamma);
        } catch (const DomainError&) {
            throw DomainExit(t, "geodesic left the chart domain");
        }
        for (int i = 0; i < n; ++i) {
            dy[i] = v[i];
            double acc = 0;
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) acc += gamma(i, j, k) * v[j] * v[k];
            dy[n + i] = -acc;
        }
        for (int q = 0; q < nv; ++q) {
            const double* dx = y + 2 * n + q * 2 * n;
            const double* dv = dx + n;
            double* ddx = dy + 2 * n + q * 2 * n;
            double* ddv = ddx + n;
            for (int i = 0; i < n; ++i) {
                ddx[i] = dv[i];
                double acc = 0;
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) {
                        double vjvk = v[j] * v[k];
                        for (int mm = 0; mm < n; ++mm)
                            acc += dgamma(mm, i, j, k) * dx[mm] * vjvk;
                        acc += gamma(i, j, k) * (dv[j] * v[k] + v[j] * dv[k]);
                    }
                ddv[i] = -acc;
            }
        }
    };

    std::array<double, kMaxState> state{};
    for (int i = 0; i < n; ++i) {
        state[i] = x0[i];
        state[n + i] = v0[i];
    }
    for (int q = 0; q < nv; ++q)
        for (int i = 0; i < n; ++i) {
            state[2 * n + q * 2 * n + i] = variations[q].dx0[i];
            state[2 * n + q * 2 * n + n + i] = variations[q].dv0[i];
        }
    std::span<double> y(state.data(), m);
    c.chart().require_inside(x0, "geodesic start");
    rk4_integrate(rhs, y, 0.0, t_end, opts.steps, [&](int step, double t, std::span<double> s) {
        if (step == 0) return;
        VecN x(n);
        for (int i = 0; i < 2 * n; ++i)
            if (!std::isfinite(s[i])) throw NonFinite(t);
        for (int i = 0; i < n; ++i) x[i] = s[i];
        if (!c.chart().contains(x)) throw DomainExit(t, "geodesic left the chart domain");
    });

    GeodesicWithVariations out;
    out.x_end = VecN(n);
    out.v_end = VecN(n);
    for (int i = 0; i < n; ++i) {
        out.x_end[i] = state[i];
        out.v_end[i] = state[n + i];
    }
    for (int q = 0; q < nv; ++q) {
        VecN dx(n), dv(n);
        for (int i = 0; i < n; ++i) {
            dx[i] = state[2 * n + q * 2 * n + i];
            dv[i] = state[2 * n + q * 2 * n + n + i];
        }
        out.dx_end.push_back(dx);
        out.dv_end.push_back(dv);
    }
    return out;
}

namespace {
// Coordinate difference wrapped to the nearest representative on periodic axes.
VecN wrapped_difference(const Chart& chart, const VecN& y, const VecN& x) {
    VecN d = y;
    d -= x;
    for (int i = 0; i < chart.dim(); ++i) {
        double p = chart.period(i);
        if (p > 0) {
            d[i] = std::fmod(d[i], p);
            if (d[i] > 0.5 * p) d[i] -= p;
            if (d[i] < -0.5 * p) d[i] += p;
        }
    }
    return d;
}
}  // namespace

VecN log_map(const ConnectionField& c, const VecN& x0, const VecN& y, double tol,
             int max_iterations, const IntegrationOptions& opts) {
    const int n = c.chart().dim();
    VecN v = wrapped_difference(c.chart(), y, x0);  // exact in flat charts
    std::vector<GeodesicVariation> vars;
    for (int i = 0; i < n; ++i) vars.push_back({VecN::zero(n), VecN::basis(n, i)});

    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iterations; ++it) {
        VecN endpoint = exp_map(c, x0, v, opts);
        VecN r = wrapped_difference(c.chart(), y, endpoint);
        res = r.norm2();
        if (res < tol) return v;
        auto gv = geodesic_with_variations(c, x0, v, vars, 1.0, opts);
        MatN J(n);  // J(a,i) = d endpoint^a / d v^i
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < n; ++a) J(a, i) = gv.dx_end[i][a];
        VecN step;
        try {
            step = solve(J, r);
        } catch (const Error&) {
            throw NoConvergence(res, "logarithm-map Jacobian singular");
        }
        // damped update: halve until the residual does not increase
        double scale = 1.0;
        for (int half = 0; half < 10; ++half) {
            VecN trial = v + scale * step;
            double trial_res;
            try {
                trial_res = wrapped_difference(c.chart(), y, exp_map(c, x0, trial, opts)).norm2();
            } catch (const Error&) {
                scale *= 0.5;
                continue;
            }
            if (trial_res < res || scale < 1e-3) {
                v = trial;
                break;
            }
            scale *= 0.5;
        }
    }
    throw NoConvergence(res, "logarithm map did not converge");
}

HolonomyResult holonomy(const ConnectionField& c, const PathCurve& loop,
                        const IntegrationOptions& opts) {
    double gap = c.chart().distance(loop.point(loop.t_begin()), loop.point(loop.t_end()));
    if (gap >= 1e-12) throw NotALoop(gap);
    const int n = c.chart().dim();
    TransportRecording rec = integrate_transport(c, loop, MatN::identity(n), opts.steps, false);
    HolonomyResult out;
    out.matrix = rec.us.back();
    out.defect = max_abs_diff(out.matrix, MatN::identity(n));
    if (opts.richardson_check) {
        TransportRecording fine =
            integrate_transport(c, loop, MatN::identity(n), 2 * opts.steps, false);
        double est = max_abs_diff(fine.us.back(), out.matrix) / 15.0;
        if (est > opts.warn_tol) out.warnings.push_back(richardson_warning(est, opts.warn_tol));
    }
    return out;
}

}  // namespace nf
