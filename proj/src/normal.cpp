#include "nf/normal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nf/integrate.hpp"

namespace nf {

namespace {

std::string format_point(const VecN& x) {
    std::string s = "(";
    char buf[32];
    for (int i = 0; i < x.n; ++i) {
        std::snprintf(buf, sizeof(buf), "%.6g", x[i]);
        s += (i ? ", " : "");
        s += buf;
    }
    return s + ")";
}

MatN gamma_dot_matrix(const Tensor3N& gamma, const VecN& v) {
    const int n = gamma.n;
    MatN m(n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double s = 0;
            for (int j = 0; j < n; ++j) s += gamma(i, j, k) * v[j];
            m(i, k) = s;
        }
    return m;
}

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

// Damped Newton for map(x) = target given a map-with-Jacobian provider.
VecN newton_invert(const Chart& range_chart,
                   const std::function<void(const VecN&, VecN&, MatN&)>& map_with_jac,
                   const VecN& target, VecN guess, double tol, int max_iter) {
    VecN x = guess;
    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        VecN fx;
        MatN J;
        map_with_jac(x, fx, J);
        VecN r = wrapped_difference(range_chart, target, fx);
        res = r.norm2();
        if (res < tol) return x;
        VecN step;
        try {
            step = solve(J, r);
        } catch (const Error&) {
            throw NoConvergence(res, "coordinate-change Jacobian singular");
        }
        double scale = 1.0;
        for (int half = 0; half < 10; ++half) {
            VecN trial = x + scale * step;
            double trial_res;
            try {
                VecN ft;
                MatN Jt;
                map_with_jac(trial, ft, Jt);
                trial_res = wrapped_difference(range_chart, target, ft).norm2();
            } catch (const Error&) {
                scale *= 0.5;
                continue;
            }
            if (trial_res < res || scale < 1e-3) {
                x = trial;
                break;
            }
            scale *= 0.5;
        }
    }
    throw NoConvergence(res, "coordinate-change inversion did not converge");
}

// J(i,a) and H(i,a,b) of a map by central differences with one Richardson
// extrapolation step; independent of any exact-derivative machinery.
void map_derivatives_fd(const std::function<VecN(const VecN&)>& fn, const VecN& x, int n_out,
                        double h, MatN& J, Tensor3N& H) {
    const int n = x.n;
    J = MatN(n_out);
    H = Tensor3N(n_out);
    VecN f0 = fn(x);
    auto d1 = [&](int a, double step) {
        VecN xp = x, xm = x;
        xp[a] += step;
        xm[a] -= step;
        VecN fp = fn(xp), fm = fn(xm);
        VecN d(n_out);
        for (int i = 0; i < n_out; ++i) d[i] = (fp[i] - fm[i]) / (2 * step);
        return d;
    };
    auto d2_diag = [&](int a, double step) {
        VecN xp = x, xm = x;
        xp[a] += step;
        xm[a] -= step;
        VecN fp = fn(xp), fm = fn(xm);
        VecN d(n_out);
        for (int i = 0; i < n_out; ++i) d[i] = (fp[i] - 2 * f0[i] + fm[i]) / (step * step);
        return d;
    };
    auto d2_cross = [&](int a, int b, double step) {
        VecN xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[a] += step;
        xpp[b] += step;
        xpm[a] += step;
        xpm[b] -= step;
        xmp[a] -= step;
        xmp[b] += step;
        xmm[a] -= step;
        xmm[b] -= step;
        VecN fpp = fn(xpp), fpm = fn(xpm), fmp = fn(xmp), fmm = fn(xmm);
        VecN d(n_out);
        for (int i = 0; i < n_out; ++i)
            d[i] = (fpp[i] - fpm[i] - fmp[i] + fmm[i]) / (4 * step * step);
        return d;
    };
    for (int a = 0; a < n; ++a) {
        VecN coarse = d1(a, h), fine = d1(a, h / 2);
        for (int i = 0; i < n_out; ++i) J(i, a) = (4 * fine[i] - coarse[i]) / 3;
        VecN c2 = d2_diag(a, h), f2 = d2_diag(a, h / 2);
        for (int i = 0; i < n_out; ++i) H(i, a, a) = (4 * f2[i] - c2[i]) / 3;
        for (int b = a + 1; b < n; ++b) {
            VecN cc = d2_cross(a, b, h), fc = d2_cross(a, b, h / 2);
            for (int i = 0; i < n_out; ++i) {
                double v = (4 * fc[i] - cc[i]) / 3;
                H(i, a, b) = v;
                H(i, b, a) = v;
            }
        }
    }
}

// Transformation law, forward form: J(i,a) = dx'^i/dx^a, H(i,a,b) = d_a d_b x'^i.
//   Gamma'(k,i,j) = J^k_a Gamma(a,b,c) (J^-1)^b_i (J^-1)^c_j
//                 - H(k,u,w) (J^-1)^u_i (J^-1)^w_j
Tensor3N law_forward(const Tensor3N& gamma, const MatN& J, const Tensor3N& H) {
    const int n = gamma.n;
    MatN Jinv = inverse(J, 1e-10);
    Tensor3N out(n);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0;
                for (int a = 0; a < n; ++a) {
                    double jka = J(k, a);
                    if (jka != 0.0) {
                        double inner = 0;
                        for (int b = 0; b < n; ++b)
                            for (int c = 0; c < n; ++c)
                                inner += gamma(a, b, c) * Jinv(b, i) * Jinv(c, j);
                        s += jka * inner;
                    }
                }
                for (int u = 0; u < n; ++u)
                    for (int w = 0; w < n; ++w) s -= H(k, u, w) * Jinv(u, i) * Jinv(w, j);
                out(k, i, j) = s;
            }
    return out;
}

// Transformation law, inverse form: Jp(a,i) = dx^a/dx'^i, Hp(a,i,j) = d_i d_j x^a.
//   Gamma'(k,i,j) = (Jp^-1)^k_a [ Gamma(a,b,c) Jp^b_i Jp^c_j + Hp(a,i,j) ]
Tensor3N law_inverse(const Tensor3N& gamma, const MatN& Jp, const Tensor3N& Hp) {
    const int n = gamma.n;
    MatN Jpinv = inverse(Jp, 1e-10);
    Tensor3N out(n);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0;
                for (int a = 0; a < n; ++a) {
                    double inner = Hp(a, i, j);
                    for (int b = 0; b < n; ++b)
                        for (int c = 0; c < n; ++c) inner += gamma(a, b, c) * Jp(b, i) * Jp(c, j);
                    s += Jpinv(k, a) * inner;
                }
                out(k, i, j) = s;
            }
    return out;
}

NormalityReport make_point_report(const VecN& p, double sup, double tol, const std::string& desc) {
    NormalityReport rep;
    rep.region = RegionKind::Point;
    rep.region_desc = desc;
    rep.sup_norm = sup;
    rep.tolerance = tol;
    rep.normal = sup < tol;
    rep.worst_point = p;
    rep.worst_desc = format_point(p);
    return rep;
}

}  // namespace

int default_grid_for_dim(int n) {
    if (n <= 2) return 11;
    if (n == 3) return 5;
    return 3;
}

// ---- CoordinateChange -------------------------------------------------------

CoordinateChange CoordinateChange::from_forward_exprs(Chart chart,
                                                      std::vector<Expression> forward) {
    if (static_cast<int>(forward.size()) != chart.dim())
        throw Error("coordinate change needs one forward expression per coordinate");
    CoordinateChange cc;
    cc.chart_ = std::move(chart);
    cc.fwd_exprs_ = std::move(forward);
    return cc;
}

CoordinateChange CoordinateChange::numeric(Chart chart, NumericMaps maps) {
    if (!maps.inverse && !maps.forward)
        throw Error("numeric coordinate change needs at least one direction");
    CoordinateChange cc;
    cc.chart_ = std::move(chart);
    cc.maps_ = std::move(maps);
    return cc;
}

VecN CoordinateChange::to_new(const VecN& x) const {
    if (!fwd_exprs_.empty()) {
        VecN xp(chart_.dim());
        for (int i = 0; i < chart_.dim(); ++i) xp[i] = fwd_exprs_[i].eval(x);
        return xp;
    }
    if (maps_.forward) return maps_.forward(x);
    // invert the numeric inverse map; differences in the old chart honor periods
    return newton_invert(
        chart_, [&](const VecN& q, VecN& f, MatN& J) { inverse_with_jacobian(q, f, J); }, x,
        VecN::zero(chart_.dim()), 1e-11, 60);
}

VecN CoordinateChange::to_old(const VecN& xp) const {
    if (maps_.inverse) return maps_.inverse(xp);
    // invert the forward expressions by Newton from the anchor
    Chart flat(chart_.dim(), chart_.coord_names());
    VecN guess = anchor_old_.n == chart_.dim() ? anchor_old_ : VecN::zero(chart_.dim());
    return newton_invert(
        flat, [&](const VecN& q, VecN& f, MatN& J) { forward_with_jacobian(q, f, J); }, xp, guess,
        1e-11, 60);
}

void CoordinateChange::forward_with_jacobian(const VecN& x, VecN& xp, MatN& J) const {
    const int n = chart_.dim();
    if (!fwd_exprs_.empty()) {
        xp = VecN(n);
        J = MatN(n);
        for (int i = 0; i < n; ++i) {
            Jet1 jet = fwd_exprs_[i].eval_jet1(x);
            xp[i] = jet.v;
            for (int a = 0; a < n; ++a) J(i, a) = jet.g[a];
        }
        return;
    }
    if (maps_.forward_with_jacobian) {
        maps_.forward_with_jacobian(x, xp, J);
        return;
    }
    throw Error("coordinate change has no forward derivative provider");
}

void CoordinateChange::inverse_with_jacobian(const VecN& xp, VecN& x, MatN& J) const {
    if (maps_.inverse_with_jacobian) {
        maps_.inverse_with_jacobian(xp, x, J);
        return;
    }
    throw Error("coordinate change has no inverse derivative provider");
}

Tensor3N christoffels_in_new_coords(const ConnectionField& c, const CoordinateChange& cc,
                                    const VecN& point, DerivRoute route) {
    const int n = c.chart().dim();
    if (cc.forward_expr_backed()) {
        const VecN& x = point;  // old coordinates
        Tensor3N gamma = c.christoffels_at(x);
        MatN J(n);
        Tensor3N H(n);
        if (route == DerivRoute::Jets) {
            for (int i = 0; i < n; ++i) {
                JetValue jet = cc.forward_exprs()[i].eval_jet(x);
                for (int a = 0; a < n; ++a) {
                    J(i, a) = jet.g[a];
                    for (int b = 0; b < n; ++b) H(i, a, b) = jet.hess(a, b);
                }
            }
        } else {
            map_derivatives_fd([&](const VecN& q) { return cc.to_new(q); }, x, n, 0.02, J, H);
        }
        return law_forward(gamma, J, H);
    }
    if (cc.has_numeric_inverse()) {
        const VecN& xp = point;  // new coordinates
        VecN x;
        MatN Jp(n);
        Tensor3N Hp(n);
        if (route == DerivRoute::Jets) {
            cc.inverse_with_jacobian(xp, x, Jp);
            // second derivatives by symmetrized differences of the Jacobian
            const double h = 5e-4;
            std::vector<MatN> dJ(n);
            for (int p = 0; p < n; ++p) {
                VecN qp = xp, qm = xp;
                qp[p] += h;
                qm[p] -= h;
                VecN dummy;
                MatN JP, JM;
                cc.inverse_with_jacobian(qp, dummy, JP);
                cc.inverse_with_jacobian(qm, dummy, JM);
                dJ[p] = MatN(n);
                for (int a = 0; a < n; ++a)
                    for (int i = 0; i < n; ++i) dJ[p](a, i) = (JP(a, i) - JM(a, i)) / (2 * h);
            }
            for (int a = 0; a < n; ++a)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) Hp(a, i, j) = 0.5 * (dJ[j](a, i) + dJ[i](a, j));
        } else {
            VecN probe = cc.to_old(xp);
            x = probe;
            map_derivatives_fd([&](const VecN& q) { return cc.to_old(q); }, xp, n, 0.02, Jp, Hp);
        }
        Tensor3N gamma = c.christoffels_at(x);
        return law_inverse(gamma, Jp, Hp);
    }
    // numeric forward backing: point in old coordinates
    const VecN& x = point;
    Tensor3N gamma = c.christoffels_at(x);
    MatN J(n);
    Tensor3N H(n);
    if (route == DerivRoute::Jets) {
        VecN xp;
        cc.forward_with_jacobian(x, xp, J);
        const double h = 5e-4;
        std::vector<MatN> dJ(n);
        for (int p = 0; p < n; ++p) {
            VecN qp = x, qm = x;
            qp[p] += h;
            qm[p] -= h;
            VecN dummy;
            MatN JP, JM;
            cc.forward_with_jacobian(qp, dummy, JP);
            cc.forward_with_jacobian(qm, dummy, JM);
            dJ[p] = MatN(n);
            for (int i = 0; i < n; ++i)
                for (int a = 0; a < n; ++a) dJ[p](i, a) = (JP(i, a) - JM(i, a)) / (2 * h);
        }
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) H(i, a, b) = 0.5 * (dJ[b](i, a) + dJ[a](i, b));
    } else {
        map_derivatives_fd([&](const VecN& q) { return cc.to_new(q); }, x, n, 0.02, J, H);
    }
    return law_forward(gamma, J, H);
}

// ---- point constructions ----------------------------------------------------

FrameField normal_frame_at_point(const ConnectionField& c, const VecN& p0, const MatN* B) {
    const int n = c.chart().dim();
    c.chart().require_inside(p0, "base point");
    Tensor3N gamma = c.christoffels_at(p0);
    MatN Bm = B ? *B : MatN::identity(n);
    // A^a_k(x) = B^a_k - Gamma(a,b,c)(p0) (x^b - p0^b) B^c_k
    std::vector<Expression> entries;
    entries.reserve(n * n);
    for (int a = 0; a < n; ++a)
        for (int k = 0; k < n; ++k) {
            Expression e = Expression::literal(Bm(a, k), n);
            for (int b = 0; b < n; ++b) {
                double coeff = 0;
                for (int cidx = 0; cidx < n; ++cidx) coeff += gamma(a, b, cidx) * Bm(cidx, k);
                if (coeff == 0.0) continue;
                e = e - Expression::literal(coeff, n) *
                            (Expression::variable(b, n) - Expression::literal(p0[b], n));
            }
            entries.push_back(std::move(e));
        }
    return FrameField::from_exprs(c.chart(), std::move(entries));
}

CoordinateChange normal_coords_at_point(const ConnectionField& c, const VecN& p0,
                                        const PointCoordsOptions& opts) {
    const int n = c.chart().dim();
    c.chart().require_inside(p0, "base point");
    Tensor3N torsion = c.torsion_at(p0);
    double tmax = torsion.max_abs();
    if (tmax >= 1e-10) throw TorsionObstruction(p0.to_vector(), tmax);

    if (!opts.perturbations.empty() &&
        static_cast<int>(opts.perturbations.size()) != n)
        throw Error("perturbations need one expression per coordinate");
    for (const Expression& p : opts.perturbations) {
        JetValue j = p.eval_jet(p0);
        double flat = std::abs(j.v);
        for (int i = 0; i < n; ++i) flat = std::max(flat, std::abs(j.g[i]));
        for (int i = 0; i < n; ++i)
            for (int k = i; k < n; ++k) flat = std::max(flat, std::abs(j.hess(i, k)));
        if (flat > 1e-9)
            throw Error("perturbation terms must vanish to second order at the base point");
    }

    Tensor3N gamma = c.christoffels_at(p0);
    MatN L = opts.linear ? *opts.linear : MatN::identity(n);
    inverse(L, 1e-10);  // reject singular post-compositions early

    // y^i = (x - p0)^i + 1/2 Gamma(i,a,b)(p0) (x-p0)^a (x-p0)^b;  x' = L y + perturbation
    std::vector<Expression> forward;
    forward.reserve(n);
    std::vector<Expression> delta;
    for (int a = 0; a < n; ++a)
        delta.push_back(Expression::variable(a, n) - Expression::literal(p0[a], n));
    for (int i = 0; i < n; ++i) {
        Expression e = Expression::literal(0.0, n);
        bool empty = true;
        for (int q = 0; q < n; ++q) {
            if (L(i, q) == 0.0) continue;
            Expression yq = delta[q];
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    double coeff = 0.5 * gamma(q, a, b);
                    if (coeff == 0.0) continue;
                    yq = yq + Expression::literal(coeff, n) * delta[a] * delta[b];
                }
            Expression term = Expression::literal(L(i, q), n) * yq;
            e = empty ? term : e + term;
            empty = false;
        }
        if (empty) e = Expression::literal(0.0, n);
        if (!opts.perturbations.empty()) e = e + opts.perturbations[i];
        forward.push_back(std::move(e));
    }
    CoordinateChange cc = CoordinateChange::from_forward_exprs(c.chart(), std::move(forward));
    cc.set_anchor_old(p0);
    return cc;
}

NormalityReport verify_frame_at_point(const ConnectionField& c, const FrameField& frame,
                                      const VecN& p0, double tol) {
    Tensor3N gp = transform_connection(c, frame, p0);
    return make_point_report(p0, gp.max_abs(), tol, "frame at point " + format_point(p0));
}

NormalityReport verify_coords_at_point(const ConnectionField& c, const CoordinateChange& cc,
                                       const VecN& point, double tol, DerivRoute route) {
    Tensor3N gp = christoffels_in_new_coords(c, cc, point, route);
    return make_point_report(point, gp.max_abs(), tol,
                             "coordinates at point " + format_point(point));
}

// ---- Riemannian normal coordinates ------------------------------------------

MatN orthonormal_frame_at(const MetricField& g, const VecN& p0, VecN* gram) {
    const int n = g.chart().dim();
    MatN G = g.value_at(p0);
    MatN F(n);
    VecN signs(n);
    // signature-aware Gram-Schmidt on the coordinate basis
    std::vector<VecN> basis;
    for (int k = 0; k < n; ++k) {
        VecN v = VecN::basis(n, k);
        for (int a = 0; a < static_cast<int>(basis.size()); ++a) {
            // subtract sign_a * g(e_a, v) e_a
            double proj = 0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) proj += basis[a][i] * G(i, j) * v[j];
            v -= (signs[a] * proj) * basis[a];
        }
        double s = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) s += v[i] * G(i, j) * v[j];
        if (std::abs(s) < 1e-12)
            throw SingularMetric(p0.to_vector(),
                                 "cannot orthonormalize a basis: null direction encountered");
        signs[static_cast<int>(basis.size())] = s > 0 ? 1.0 : -1.0;
        v *= 1.0 / std::sqrt(std::abs(s));
        basis.push_back(v);
    }
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i) F(i, k) = basis[k][i];
    if (gram) *gram = signs;
    return F;
}

RiemannNormalChart riemann_normal_coords(const ConnectionField& c, const VecN& p0,
                                         const MatN* frame0, const RiemannNormalOptions& opts) {
    const int n = c.chart().dim();
    if (!c.metric_derived())
        throw Error("Riemannian normal coordinates need a metric-derived connection");
    c.chart().require_inside(p0, "origin");
    VecN gram(n);
    MatN F0 = frame0 ? *frame0 : orthonormal_frame_at(*c.metric(), p0, &gram);
    if (frame0) {
        MatN G = c.metric()->value_at(p0);
        for (int k = 0; k < n; ++k) {
            double s = 0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) s += F0(i, k) * G(i, j) * F0(j, k);
            gram[k] = s;
        }
    }
    MatN F0inv = inverse(F0, 1e-10);
    IntegrationOptions iopts;
    iopts.steps = opts.steps;

    ConnectionField conn = c;  // owned copy for the closures
    CoordinateChange::NumericMaps maps;
    maps.inverse = [conn, p0, F0, iopts](const VecN& xp) { return exp_map(conn, p0, F0 * xp, iopts); };
    maps.inverse_with_jacobian = [conn, p0, F0, iopts, n](const VecN& xp, VecN& x, MatN& J) {
        std::vector<GeodesicVariation> vars;
        vars.reserve(n);
        for (int i = 0; i < n; ++i) {
            VecN col(n);
            for (int a = 0; a < n; ++a) col[a] = F0(a, i);
            vars.push_back({VecN::zero(n), col});
        }
        auto gv = geodesic_with_variations(conn, p0, F0 * xp, vars, 1.0, iopts);
        x = gv.x_end;
        J = MatN(n);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < n; ++a) J(a, i) = gv.dx_end[i][a];
    };
    double newton_tol = opts.newton_tol;
    maps.forward = [conn, p0, F0inv, iopts, newton_tol](const VecN& x) {
        VecN v = log_map(conn, p0, x, newton_tol, 50, iopts);
        return F0inv * v;
    };

    RiemannNormalChart chart;
    chart.change = CoordinateChange::numeric(c.chart(), std::move(maps));
    chart.origin = p0;
    chart.frame = F0;
    chart.gram = gram;
    return chart;
}

// ---- along-path constructions -------------------------------------------------

FrameAlongPath normal_frame_along_path(const ConnectionField& c, const PathCurve& path,
                                       const MatN& A0, const IntegrationOptions& opts) {
    inverse(A0, 1e-10);  // reject singular initial frames
    FrameAlongPath fap{path, transport_matrix(c, path, A0, opts), {}};
    if (auto warn = path.injectivity_warning()) fap.warnings.push_back(*warn);
    for (const auto& w : fap.frames.warnings) fap.warnings.push_back(w);
    return fap;
}

NormalityReport verify_frame_along_path(const ConnectionField& c, const FrameAlongPath& fap,
                                        double tol, int samples) {
    const auto& ts = fap.frames.ts;
    const auto& As = fap.frames.matrices;
    const int N = static_cast<int>(ts.size());
    if (N < 7) throw Error("too few stored samples to verify a path frame");
    const double h = ts[1] - ts[0];
    const int n = As.front().n;

    NormalityReport rep;
    rep.region = RegionKind::Path;
    rep.region_desc = "along path";
    rep.tolerance = tol;
    double sup = 0;
    for (int q = 0; q < samples; ++q) {
        int idx = 2 + static_cast<int>((static_cast<long long>(N - 5) * q) / std::max(1, samples - 1));
        // 4th-order five-point derivative of the stored frames
        MatN Adot(n);
        for (int e = 0; e < n * n; ++e)
            Adot.a[e] = (-As[idx + 2].a[e] + 8 * As[idx + 1].a[e] - 8 * As[idx - 1].a[e] +
                         As[idx - 2].a[e]) /
                        (12 * h);
        VecN x, v;
        fap.path.point_and_tangent(ts[idx], x, v);
        MatN M = gamma_dot_matrix(c.christoffels_at(x), v);
        MatN defect = inverse(As[idx], 1e-10) * (Adot + M * As[idx]);
        double d = defect.max_abs();
        if (d > sup) {
            sup = d;
            rep.worst_point = x;
            rep.worst_param = ts[idx];
        }
    }
    rep.sup_norm = sup;
    rep.normal = sup < tol;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "worst at t=%.6g", rep.worst_param);
    rep.worst_desc = buf;
    return rep;
}

// ---- Fermi coordinates --------------------------------------------------------

MatN fermi_axis_frame(const ConnectionField& c, const PathCurve& axis) {
    const int n = c.chart().dim();
    VecN x0, v0;
    axis.point_and_tangent(axis.t_begin(), x0, v0);
    if (v0.norm_inf() == 0.0) throw Error("axis tangent vanishes at the start");
    MatN G = c.metric_derived() ? c.metric()->value_at(x0) : MatN::identity(n);
    // Gram-Schmidt over [v0, coordinate basis], keeping the first n
    // independent directions; works for indefinite metrics off null vectors.
    std::vector<VecN> basis;
    std::vector<double> signs;
    std::vector<VecN> candidates{v0};
    for (int k = 0; k < n; ++k) candidates.push_back(VecN::basis(n, k));
    for (const VecN& cand : candidates) {
        if (static_cast<int>(basis.size()) == n) break;
        VecN v = cand;
        for (std::size_t a = 0; a < basis.size(); ++a) {
            double proj = 0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) proj += basis[a][i] * G(i, j) * v[j];
            v -= (signs[a] * proj) * basis[a];
        }
        double s = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) s += v[i] * G(i, j) * v[j];
        if (std::abs(s) < 1e-10 * (1 + v.norm2() * v.norm2())) continue;  // dependent or null
        signs.push_back(s > 0 ? 1.0 : -1.0);
        v *= 1.0 / std::sqrt(std::abs(s));
        basis.push_back(v);
    }
    if (static_cast<int>(basis.size()) != n)
        throw Error("could not complete the axis tangent to a basis");
    // keep the exact tangent in column 0 so coordinate 0 matches the axis parameter
    basis[0] = v0;
    MatN A0(n);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i) A0(i, k) = basis[k][i];
    inverse(A0, 1e-10);
    return A0;
}

FermiChart fermi_coords(const ConnectionField& c, const PathCurve& axis,
                        const FrameAlongPath& frame, const FermiOptions& opts) {
    const int n = c.chart().dim();
    const double ta = axis.t_begin(), tb = axis.t_end();
    // preconditions: torsionless connection, geodesic axis
    for (int q = 0; q < 5; ++q) {
        double t = ta + (tb - ta) * (q + 0.5) / 5.0;
        VecN x = axis.point(t);
        Tensor3N tor = c.torsion_at(x);
        if (tor.max_abs() >= opts.torsion_tol)
            throw TorsionObstruction(x.to_vector(), tor.max_abs());
        if (auto acc = axis.acceleration(t)) {
            VecN v, xx;
            axis.point_and_tangent(t, xx, v);
            Tensor3N gamma = c.christoffels_at(x);
            double defect = 0;
            for (int i = 0; i < n; ++i) {
                double s = (*acc)[i];
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) s += gamma(i, j, k) * v[j] * v[k];
                defect = std::max(defect, std::abs(s));
            }
            if (defect > opts.geodesic_check_tol)
                throw Error("Fermi axis is not a geodesic (defect " + std::to_string(defect) + ")");
        }
    }

    IntegrationOptions iopts;
    iopts.steps = opts.steps;
    ConnectionField conn = c;
    PathCurve axis_copy = axis;
    MatrixAlongPath frames = frame.frames;

    auto decompose = [n](const VecN& xp, double& tau, VecN& xi) {
        tau = xp[0];
        xi = VecN(n);
        for (int a = 1; a < n; ++a) xi[a] = xp[a];
    };

    auto psi_state = [conn, axis_copy, frames, iopts, n, ta, tb, decompose](
                         const VecN& xp, bool want_jac, VecN& x, MatN& J) {
        double tau;
        VecN xi;
        decompose(xp, tau, xi);
        if (tau < ta - 1e-9 || tau > tb + 1e-9)
            throw OutOfRange("Fermi axis parameter outside the path range");
        tau = std::clamp(tau, ta, tb);
        VecN base, base_dot;
        axis_copy.point_and_tangent(tau, base, base_dot);
        MatN A, Adot;
        frames.at_with_deriv(tau, A, Adot);
        VecN v(n), vdot(n);
        for (int i = 0; i < n; ++i)
            for (int a = 1; a < n; ++a) {
                v[i] += xi[a] * A(i, a);
                vdot[i] += xi[a] * Adot(i, a);
            }
        if (!want_jac) {
            x = exp_map(conn, base, v, iopts);
            return;
        }
        std::vector<GeodesicVariation> vars;
        vars.push_back({base_dot, vdot});  // d/d tau
        for (int a = 1; a < n; ++a) {
            VecN col(n);
            for (int i = 0; i < n; ++i) col[i] = A(i, a);
            vars.push_back({VecN::zero(n), col});  // d/d xi^a
        }
        auto gv = geodesic_with_variations(conn, base, v, vars, 1.0, iopts);
        x = gv.x_end;
        J = MatN(n);
        for (int q = 0; q < n; ++q)
            for (int i = 0; i < n; ++i) J(i, q) = gv.dx_end[q][i];
    };

    CoordinateChange::NumericMaps maps;
    maps.inverse = [psi_state](const VecN& xp) {
        VecN x;
        MatN J;
        psi_state(xp, false, x, J);
        return x;
    };
    maps.inverse_with_jacobian = [psi_state](const VecN& xp, VecN& x, MatN& J) {
        psi_state(xp, true, x, J);
    };
    Chart ambient = c.chart();
    double newton_tol = opts.newton_tol;
    auto inv_with_jac = maps.inverse_with_jacobian;
    maps.forward = [ambient, axis_copy, inv_with_jac, newton_tol, n, ta, tb](const VecN& x) {
        // initial guess: nearest axis sample, zero transverse offset
        double best_t = ta;
        double best_d = std::numeric_limits<double>::infinity();
        for (int q = 0; q <= 64; ++q) {
            double t = ta + (tb - ta) * q / 64.0;
            double d = ambient.distance(axis_copy.point(t), x);
            if (d < best_d) {
                best_d = d;
                best_t = t;
            }
        }
        VecN guess = VecN::zero(n);
        guess[0] = best_t;
        return newton_invert(ambient, inv_with_jac, x, guess, newton_tol, 50);
    };

    FermiChart out{CoordinateChange::numeric(c.chart(), std::move(maps)), axis, frame};
    return out;
}

// ---- open-set constructions ----------------------------------------------------

namespace {

// Parallel transport along the axis-ordered polyline from -> to (change
// coordinate 0 first, then coordinate 1, ...), chaining one segment at a time
// with steps proportional to the coordinate length of each segment.
MatN polyline_transport(const ConnectionField& c, const VecN& from, const VecN& to, MatN U,
                        int steps_per_unit, int min_steps) {
    const int n = from.n;
    VecN cur = from;
    for (int axis = 0; axis < n; ++axis) {
        double len = std::abs(to[axis] - cur[axis]);
        if (len == 0.0) continue;
        VecN next = cur;
        next[axis] = to[axis];
        PathCurve seg = PathCurve::polyline(c.chart(), {cur, next});
        IntegrationOptions opts;
        opts.steps = std::max(min_steps, static_cast<int>(std::ceil(steps_per_unit * len)));
        U = transport_matrix(c, seg, U, opts).matrices.back();
        cur = next;
    }
    return U;
}

std::vector<VecN> grid_nodes(const Box& box, int grid, int n) {
    std::vector<VecN> nodes;
    std::vector<int> idx(n, 0);
    const long long total = [&] {
        long long t = 1;
        for (int i = 0; i < n; ++i) t *= grid;
        return t;
    }();
    nodes.reserve(total);
    for (long long q = 0; q < total; ++q) {
        long long rem = q;
        VecN x(n);
        for (int i = n - 1; i >= 0; --i) {
            int k = static_cast<int>(rem % grid);
            rem /= grid;
            x[i] = grid == 1 ? box.lo[i]
                             : box.lo[i] + (box.hi[i] - box.lo[i]) * k / (grid - 1);
        }
        nodes.push_back(x);
    }
    return nodes;
}

}  // namespace

OpenSetFrame normal_frame_on_open_set(const ConnectionField& c, const Box& box, const VecN& base,
                                      const OpenSetOptions& opts) {
    const int n = c.chart().dim();
    for (int i = 0; i < n; ++i) {
        if (!(box.lo[i] < box.hi[i])) throw Error("open-set box must be non-degenerate");
        if (base[i] < box.lo[i] || base[i] > box.hi[i])
            throw Error("base point must lie in the box");
    }
    c.chart().require_inside(base, "base point");
    const int grid = opts.grid > 0 ? opts.grid : default_grid_for_dim(n);
    std::vector<VecN> nodes = grid_nodes(box, grid, n);

    // flatness gate: frames normal on an open set exist iff the connection is flat there
    double worst_R = 0;
    VecN worst_node = nodes.front();
    for (const VecN& node : nodes) {
        double r = c.curvature_max_at(node);
        if (r > worst_R) {
            worst_R = r;
            worst_node = node;
        }
    }
    if (worst_R >= opts.tol_R) throw CurvatureObstruction(worst_node.to_vector(), worst_R);

    MatN B = opts.base_frame ? *opts.base_frame : MatN::identity(n);
    inverse(B, 1e-10);
    ConnectionField conn = c;
    int spu = opts.steps_per_unit, ms = opts.min_steps;
    auto value_fn = [conn, base, B, spu, ms](const VecN& x) {
        return polyline_transport(conn, base, x, B, spu, ms);
    };

    OpenSetFrame out{FrameField::from_callable(c.chart(), value_fn, {}, opts.fd_step),
                     box,
                     base,
                     grid,
                     nodes,
                     {}};
    out.frames.reserve(nodes.size());
    for (const VecN& node : nodes) out.frames.push_back(value_fn(node));
    return out;
}

NormalityReport verify_frame_on_grid(const ConnectionField& c, const FrameField& frame,
                                     const std::vector<VecN>& nodes, double tol) {
    NormalityReport rep;
    rep.region = RegionKind::Grid;
    rep.region_desc = "grid of " + std::to_string(nodes.size()) + " nodes";
    rep.tolerance = tol;
    double sup = 0;
    for (const VecN& node : nodes) {
        Tensor3N gp = transform_connection(c, frame, node);
        double d = gp.max_abs();
        if (d >= sup) {
            sup = d;
            rep.worst_point = node;
        }
    }
    rep.sup_norm = sup;
    rep.normal = sup < tol;
    rep.worst_desc = format_point(rep.worst_point);
    return rep;
}

OpenSetCoords normal_coords_on_open_set(const ConnectionField& c, const Box& box, const VecN& base,
                                        const OpenSetOptions& opts) {
    const int n = c.chart().dim();
    OpenSetFrame frame = normal_frame_on_open_set(c, box, base, opts);

    // coordinates additionally need vanishing torsion (integrability)
    double worst_T = 0;
    VecN worst_node = frame.nodes.front();
    for (const VecN& node : frame.nodes) {
        double t = c.torsion_max_at(node);
        if (t > worst_T) {
            worst_T = t;
            worst_node = node;
        }
    }
    if (worst_T >= opts.tol_T) throw TorsionObstruction(worst_node.to_vector(), worst_T);

    // forward map by quadrature of dx'/ds = A^-1 dx/ds along the same
    // axis-ordered polylines, integrating the frame alongside
    ConnectionField conn = c;
    MatN B = opts.base_frame ? *opts.base_frame : MatN::identity(n);
    int spu = opts.steps_per_unit, ms = opts.min_steps;
    auto forward_state = [conn, base, B, spu, ms, n](const VecN& x, VecN& xp, MatN* A_out) {
        VecN cur = base;
        MatN U = B;
        xp = VecN(n);
        std::array<double, kMaxDim * kMaxDim + kMaxDim> state{};
        for (int axis = 0; axis < n; ++axis) {
            double len = std::abs(x[axis] - cur[axis]);
            if (len == 0.0) continue;
            VecN next = cur;
            next[axis] = x[axis];
            // state = (U, x'), param s in [0,1] along the segment
            for (int e = 0; e < n * n; ++e) state[e] = U.a[e];
            for (int i = 0; i < n; ++i) state[n * n + i] = xp[i];
            VecN dir = next - cur;
            VecN cur_copy = cur;
            auto rhs = [&](double s, const double* y, double* dy) {
                VecN pos = cur_copy + s * dir;
                MatN Uy(n);
                for (int e = 0; e < n * n; ++e) Uy.a[e] = y[e];
                Tensor3N gamma;
                try {
                    gamma = conn.christoffels_at(pos);
                } catch (const DomainError&) {
                    throw DomainExit(s, "quadrature path left the chart domain");
                }
                MatN M = gamma_dot_matrix(gamma, dir);
                MatN Uinv = inverse(Uy, 1e-10);
                for (int col = 0; col < n; ++col)
                    for (int i = 0; i < n; ++i) {
                        double acc = 0;
                        for (int k = 0; k < n; ++k) acc += M(i, k) * Uy(k, col);
                        dy[i * n + col] = -acc;
                    }
                for (int k = 0; k < n; ++k) {
                    double acc = 0;
                    for (int a = 0; a < n; ++a) acc += Uinv(k, a) * dir[a];
                    dy[n * n + k] = acc;
                }
            };
            int steps = std::max(ms, static_cast<int>(std::ceil(spu * len)));
            std::span<double> y(state.data(), n * n + n);
            rk4_integrate(rhs, y, 0.0, 1.0, steps);
            for (int e = 0; e < n * n; ++e) U.a[e] = state[e];
            for (int i = 0; i < n; ++i) xp[i] = state[n * n + i];
            cur = next;
        }
        if (A_out) *A_out = U;
    };

    CoordinateChange::NumericMaps maps;
    maps.forward = [forward_state](const VecN& x) {
        VecN xp;
        forward_state(x, xp, nullptr);
        return xp;
    };
    maps.forward_with_jacobian = [forward_state, n](const VecN& x, VecN& xp, MatN& J) {
        MatN A;
        forward_state(x, xp, &A);
        J = inverse(A, 1e-10);  // dx'/dx is the inverse of the transported frame
    };

    OpenSetCoords out{CoordinateChange::numeric(c.chart(), std::move(maps)), frame, 0.0};
    out.change.set_anchor_old(base);

    // integrability witness: d_a (A^-1)^k_b - d_b (A^-1)^k_a on the grid
    double mixed = 0;
    for (const VecN& node : frame.nodes) {
        MatN A;
        Tensor3N dA;
        frame.field.with_grad(node, A, dA);
        MatN W = inverse(A, 1e-10);
        Tensor3N dW(n);  // dW(a,k,b) = d_a W(k,b) = -(W dA_a W)(k,b)
        for (int a = 0; a < n; ++a) {
            MatN dAa(n);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < n; ++k) dAa(i, k) = dA(a, i, k);
            MatN t = W * dAa * W;
            for (int k = 0; k < n; ++k)
                for (int b = 0; b < n; ++b) dW(a, k, b) = -t(k, b);
        }
        for (int k = 0; k < n; ++k)
            for (int a = 0; a < n; ++a)
                for (int b = a + 1; b < n; ++b)
                    mixed = std::max(mixed, std::abs(dW(a, k, b) - dW(b, k, a)));
    }
    out.mixed_partial_defect = mixed;
    return out;
}

// ---- submanifold patches -------------------------------------------------------

VecN patch_point(const PatchSpec& patch, const VecN& u) {
    const int n = patch.ambient.dim();
    VecN x(n);
    for (int i = 0; i < n; ++i) x[i] = patch.phi[i].eval(u);
    return x;
}

void patch_point_and_tangents(const PatchSpec& patch, const VecN& u, VecN& x, MatN& tangents) {
    const int n = patch.ambient.dim();
    const int m = patch.param.dim();
    x = VecN(n);
    tangents = MatN(n);  // columns 0..m-1 are d phi / d u^a
    for (int i = 0; i < n; ++i) {
        Jet1 j = patch.phi[i].eval_jet1(u);
        x[i] = j.v;
        for (int a = 0; a < m; ++a) tangents(i, a) = j.g[a];
    }
}

namespace {

// Transport along the image of a parameter-space polyline.
MatN patch_polyline_transport(const ConnectionField& c, const PatchSpec& patch, const VecN& from,
                              const VecN& to, MatN U, int steps_per_unit, int min_steps) {
    const int m = patch.param.dim();
    VecN cur = from;
    for (int axis = 0; axis < m; ++axis) {
        double len = std::abs(to[axis] - cur[axis]);
        if (len == 0.0) continue;
        VecN next = cur;
        next[axis] = to[axis];
        PathCurve param_seg = PathCurve::polyline(patch.param, {cur, next});
        PathCurve seg = PathCurve::mapped(patch.ambient, patch.phi, param_seg);
        IntegrationOptions opts;
        opts.steps = std::max(min_steps, static_cast<int>(std::ceil(steps_per_unit * len)));
        U = transport_matrix(c, seg, U, opts).matrices.back();
        cur = next;
    }
    return U;
}

}  // namespace

PatchFrameResult submanifold_normality(const ConnectionField& c, const PatchSpec& patch,
                                       const PatchOptions& opts) {
    const int n = patch.ambient.dim();
    const int m = patch.param.dim();
    if (m > n) throw Error("patch dimension exceeds the chart dimension");
    if (static_cast<int>(patch.phi.size()) != n)
        throw Error("patch map needs one expression per ambient coordinate");
    Box pbox;
    pbox.lo = VecN(m);
    pbox.hi = VecN(m);
    for (int a = 0; a < m; ++a) {
        double lo = patch.param.lower(a), hi = patch.param.upper(a);
        if (patch.param.period(a) > 0 && !(std::isfinite(lo) && std::isfinite(hi))) {
            lo = 0;
            hi = patch.param.period(a);
        }
        if (!std::isfinite(lo) || !std::isfinite(hi))
            throw Error("patch parameter box must be bounded");
        pbox.lo[a] = lo;
        pbox.hi[a] = hi;
    }

    const int grid = opts.grid;
    std::vector<VecN> param_nodes = grid_nodes(pbox, grid, m);

    PatchFrameResult result;
    result.param_nodes = param_nodes;

    // battery of loops lying in the patch: grid-cell rectangles for every
    // parameter-axis pair, plus full circles along periodic parameter axes
    IntegrationOptions loop_opts;
    loop_opts.steps = opts.loop_steps;
    double worst = 0;
    std::string worst_desc = "none";
    auto run_loop = [&](const PathCurve& loop, const std::string& desc) {
        HolonomyResult h = holonomy(c, loop, loop_opts);
        result.loops.push_back({desc, h.defect});
        if (h.defect > worst) {
            worst = h.defect;
            worst_desc = desc;
        }
    };

    if (m >= 2) {
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b)
                for (const VecN& node : param_nodes) {
                    // cells anchored at nodes that are not on the top edge
                    double step_a = (pbox.hi[a] - pbox.lo[a]) / (grid - 1);
                    double step_b = (pbox.hi[b] - pbox.lo[b]) / (grid - 1);
                    if (node[a] + step_a > pbox.hi[a] + 1e-12) continue;
                    if (node[b] + step_b > pbox.hi[b] + 1e-12) continue;
                    VecN p1 = node, p2 = node, p3 = node;
                    p1[b] += step_b;
                    p2[a] += step_a;
                    p2[b] += step_b;
                    p3[a] += step_a;
                    PathCurve rect = PathCurve::mapped(
                        patch.ambient, patch.phi,
                        PathCurve::polyline(patch.param, {node, p1, p2, p3, node}));
                    char buf[128];
                    std::snprintf(buf, sizeof(buf), "cell rectangle at u=%s axes (%d,%d)",
                                  format_point(node).c_str(), a, b);
                    run_loop(rect, buf);
                }
    }
    // m = 1 patches are paths: frames normal along a path always exist, so
    // there is no battery to run (no loops with area)
    for (int a = 0; m >= 2 && a < m; ++a) {
        if (!(patch.param.period(a) > 0)) continue;
        for (const VecN& node : param_nodes) {
            bool at_lo = std::abs(node[a] - pbox.lo[a]) < 1e-12;
            if (!at_lo) continue;  // one belt per row of the other axes
            PathCurve belt = PathCurve::mapped(patch.ambient, patch.phi,
                                               coordinate_circle_loop(patch.param, node, a));
            if (!belt.is_loop(1e-9)) continue;  // map is not period-compatible here
            char buf[128];
            std::snprintf(buf, sizeof(buf), "belt along axis %d at u=%s", a,
                          format_point(node).c_str());
            run_loop(belt, buf);
        }
    }

    if (worst >= opts.loop_tol) throw HolonomyObstruction(worst_desc, worst);

    // construction: transport a frame over the patch along parameter polylines
    VecN pbase = param_nodes.front();
    MatN B = MatN::identity(n);
    result.frames.reserve(param_nodes.size());
    result.ambient_nodes.reserve(param_nodes.size());
    for (const VecN& u : param_nodes) {
        result.ambient_nodes.push_back(patch_point(patch, u));
        result.frames.push_back(
            patch_polyline_transport(c, patch, pbase, u, B, opts.steps_per_unit, opts.min_steps));
    }

    // verification: |Gamma'(i,j,k) V^j| for patch-tangent directions V at the nodes
    NormalityReport rep;
    rep.region = RegionKind::Patch;
    rep.region_desc = "patch grid of " + std::to_string(param_nodes.size()) + " nodes";
    rep.tolerance = opts.tol;
    double sup = 0;
    const double h = opts.fd_step;
    for (std::size_t q = 0; q < param_nodes.size(); ++q) {
        const VecN& u = param_nodes[q];
        VecN x;
        MatN tangents;
        patch_point_and_tangents(patch, u, x, tangents);
        const MatN& A = result.frames[q];
        MatN Ainv = inverse(A, 1e-10);
        Tensor3N gamma = c.christoffels_at(x);
        for (int a = 0; a < m; ++a) {
            auto probe = [&](double offset) {
                VecN uq = u;
                uq[a] += offset;
                return patch_polyline_transport(c, patch, pbase, uq, B, opts.steps_per_unit,
                                                opts.min_steps);
            };
            // 4th-order stencil; 3-point truncation would mask the verdict
            MatN App = probe(2 * h), Ap = probe(h), Am = probe(-h), Amm = probe(-2 * h);
            MatN dA(n);
            for (int e = 0; e < n * n; ++e)
                dA.a[e] = (-App.a[e] + 8 * Ap.a[e] - 8 * Am.a[e] + Amm.a[e]) / (12 * h);
            VecN V(n);
            for (int i = 0; i < n; ++i) V[i] = tangents(i, a);
            MatN defect = Ainv * (dA + gamma_dot_matrix(gamma, V) * A);
            double d = defect.max_abs();
            if (d > sup) {
                sup = d;
                rep.worst_point = x;
                rep.worst_desc = "patch node " + format_point(u) + " direction " + std::to_string(a);
            }
        }
    }
    rep.sup_norm = sup;
    rep.normal = sup < opts.tol;
    result.report = rep;
    return result;
}

NormalityReport verify_fermi_on_axis(const ConnectionField& c, const FermiChart& fermi, double tol,
                                     int samples) {
    const int n = c.chart().dim();
    const double ta = fermi.axis.t_begin(), tb = fermi.axis.t_end();
    NormalityReport rep;
    rep.region = RegionKind::Path;
    rep.region_desc = "Fermi chart on axis";
    rep.tolerance = tol;
    double sup = 0;
    for (int q = 0; q < samples; ++q) {
        // stay clear of the ends so the tau-derivative probes remain in range
        double tau = ta + (tb - ta) * (q + 0.5) / samples;
        VecN xp = VecN::zero(n);
        xp[0] = tau;
        Tensor3N gp = christoffels_in_new_coords(c, fermi.change, xp, DerivRoute::Jets);
        double d = gp.max_abs();
        if (d > sup) {
            sup = d;
            rep.worst_param = tau;
            rep.worst_point = fermi.axis.point(tau);
        }
    }
    rep.sup_norm = sup;
    rep.normal = sup < tol;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "worst at axis parameter t=%.6g", rep.worst_param);
    rep.worst_desc = buf;
    return rep;
}

}  // namespace nf
