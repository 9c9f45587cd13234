#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nf/catalog.hpp"
#include "nf/geometry.hpp"

using namespace nf;

namespace {

constexpr double kPi = 3.14159265358979323846;

MetricField make_metric(const std::vector<std::string>& coords,
                        const std::vector<std::string>& upper,
                        const std::map<std::string, double>& constants = {}) {
    Chart chart(static_cast<int>(coords.size()), coords);
    return MetricField(chart, parse_all(upper, coords, constants));
}

// Independent Christoffel oracle: the Levi-Civita formula assembled from
// central finite differences of the metric values (no jets involved).
Tensor3N fd_christoffel(const MetricField& g, const VecN& x, double h = 1e-5) {
    const int n = x.n;
    MatN ginv = inverse(g.value_at(x));
    Tensor3N dg(n);
    for (int m = 0; m < n; ++m) {
        VecN xp = x, xm = x;
        xp[m] += h;
        xm[m] -= h;
        MatN gp = g.value_at(xp), gm = g.value_at(xm);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) dg(m, i, j) = (gp(i, j) - gm(i, j)) / (2 * h);
    }
    Tensor3N gamma(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                double s = 0;
                for (int l = 0; l < n; ++l)
                    s += ginv(i, l) * (dg(j, l, k) + dg(k, l, j) - dg(l, j, k));
                gamma(i, j, k) = 0.5 * s;
            }
    return gamma;
}

}  // namespace

TEST_CASE("constant metric has vanishing coefficients") {
    MetricField g = make_metric({"x", "y"}, {"1", "0", "1"});
    ConnectionField conn = christoffel_from_metric(g);
    for (const VecN& x : {VecN{0.3, -1.2}, VecN{2.0, 5.0}}) {
        CHECK(conn.christoffels_at(x).max_abs() == 0.0);
        CHECK(conn.curvature_at(x).max_abs() == 0.0);
        CHECK(conn.torsion_at(x).max_abs() == 0.0);
    }
}

TEST_CASE("polar plane coefficients match the closed form and the FD oracle") {
    MetricField g = make_metric({"r", "ph"}, {"1", "0", "r^2"});
    ConnectionField conn = christoffel_from_metric(g);
    for (double r : {0.5, 1.0, 2.0, 3.7}) {
        VecN x{r, 0.8};
        Tensor3N gamma = conn.christoffels_at(x);
        CHECK(gamma(0, 1, 1) == doctest::Approx(-r).epsilon(1e-12));
        CHECK(gamma(1, 0, 1) == doctest::Approx(1.0 / r).epsilon(1e-12));
        CHECK(gamma(1, 1, 0) == doctest::Approx(1.0 / r).epsilon(1e-12));
        Tensor3N oracle = fd_christoffel(g, x);
        CHECK(max_abs_diff(gamma, oracle) < 1e-7);
    }
}

TEST_CASE("unit sphere coefficients match the closed form away from the poles") {
    MetricField g = make_metric({"th", "ph"}, {"1", "0", "sin(th)^2"});
    ConnectionField conn = christoffel_from_metric(g);
    for (double th : {0.4, kPi / 3, kPi / 2, 2.5}) {
        VecN x{th, 1.0};
        Tensor3N gamma = conn.christoffels_at(x);
        CHECK(gamma(0, 1, 1) == doctest::Approx(-std::sin(th) * std::cos(th)).epsilon(1e-12));
        CHECK(gamma(1, 0, 1) == doctest::Approx(std::cos(th) / std::sin(th)).epsilon(1e-12));
        CHECK(max_abs_diff(gamma, fd_christoffel(g, x)) < 1e-7);
    }
}

TEST_CASE("metric-derived coefficients are symmetric in the lower pair") {
    const CatalogEntry& sch = catalog_get("schwarzschild");
    const ConnectionField& conn = sch.conn();
    for (const VecN& x : sample_domain_points(sch.chart, 10)) {
        Tensor3N gamma = conn.christoffels_at(x);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 4; ++k)
                    CHECK(gamma(i, j, k) == doctest::Approx(gamma(i, k, j)).epsilon(1e-10));
        CHECK(conn.torsion_at(x).max_abs() == 0.0);
    }
}

TEST_CASE("torsion of a direct connection is twice the antisymmetric part") {
    Chart chart(2, {"x", "y"});
    std::vector<std::string> gamma_text(8, "0");
    gamma_text[0 * 4 + 0 * 2 + 1] = "1";  // Gamma(0,0,1) = 1
    ConnectionField conn = ConnectionField::direct(chart, parse_all(gamma_text, {"x", "y"}));
    Tensor3N t = conn.torsion_at(VecN{0.2, 0.4});
    CHECK(t(0, 0, 1) == 1.0);
    CHECK(t(0, 1, 0) == -1.0);
    CHECK(t(0, 0, 0) == 0.0);
    CHECK(t(1, 0, 1) == 0.0);
}

TEST_CASE("Weyl connection is torsionless; sphere curvature matches K = 1") {
    const CatalogEntry& weyl = catalog_get("weyl-example");
    for (const VecN& x : sample_domain_points(weyl.chart, 10))
        CHECK(weyl.conn().torsion_at(x).max_abs() == 0.0);

    const CatalogEntry& sphere = catalog_get("sphere");
    for (double th : {0.6, 1.1, kPi / 2, 2.2}) {
        VecN x{th, 0.7};
        Tensor4N r = sphere.conn().curvature_at(x);
        // R(th, ph, th, ph) = sin(th)^2 on the unit sphere
        double s2 = std::sin(th) * std::sin(th);
        CHECK(r(0, 1, 0, 1) == doctest::Approx(s2).epsilon(1e-9));
        // antisymmetry in the last index pair
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 2; ++k)
                for (int j = 0; j < 2; ++j)
                    for (int l = 0; l < 2; ++l)
                        CHECK(r(i, k, j, l) == doctest::Approx(-r(i, k, l, j)).epsilon(1e-10));
    }
}

TEST_CASE("fully covariant curvature has pair symmetry for metric connections") {
    for (const char* id : {"sphere", "schwarzschild", "einstein-de-sitter", "pseudo-sphere"}) {
        const CatalogEntry& entry = catalog_get(id);
        const int n = entry.chart.dim();
        for (const VecN& x : sample_domain_points(entry.chart, 20)) {
            Tensor4N r = entry.conn().curvature_at(x);
            MatN g = entry.metric->value_at(x);
            Tensor4N rc(n);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < n; ++k)
                    for (int j = 0; j < n; ++j)
                        for (int l = 0; l < n; ++l) {
                            double s = 0;
                            for (int a = 0; a < n; ++a) s += g(i, a) * r(a, k, j, l);
                            rc(i, k, j, l) = s;
                        }
            double scale = std::max(1.0, rc.max_abs());
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < n; ++k)
                    for (int j = 0; j < n; ++j)
                        for (int l = 0; l < n; ++l) {
                            CAPTURE(id);
                            // R_{ikjl} = R_{jlik}
                            CHECK(std::abs(rc(i, k, j, l) - rc(j, l, i, k)) / scale < 1e-8);
                        }
        }
    }
}

TEST_CASE("metric compatibility: covariant derivative of g vanishes") {
    for (const char* id : {"sphere", "schwarzschild", "de-sitter", "polar-plane"}) {
        const CatalogEntry& entry = catalog_get(id);
        const int n = entry.chart.dim();
        for (const VecN& x : sample_domain_points(entry.chart, 10)) {
            MatN g;
            Tensor3N dg;
            entry.metric->with_grad(x, g, dg);
            Tensor3N gamma = entry.conn().christoffels_at(x);
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        double s = dg(j, k, l);
                        for (int a = 0; a < n; ++a)
                            s -= gamma(a, j, k) * g(a, l) + gamma(a, j, l) * g(k, a);
                        CAPTURE(id);
                        CHECK(std::abs(s) < 1e-8);
                    }
        }
    }
}

TEST_CASE("identity frame leaves coefficients unchanged") {
    const CatalogEntry& sphere = catalog_get("sphere");
    FrameField id_frame = FrameField::constant(sphere.chart, MatN::identity(2));
    for (const VecN& x : sample_domain_points(sphere.chart, 10)) {
        Tensor3N orig = sphere.conn().christoffels_at(x);
        Tensor3N transformed = transform_connection(sphere.conn(), id_frame, x);
        CHECK(max_abs_diff(orig, transformed) < 1e-14);
    }
}

TEST_CASE("constant frame on a flat connection stays flat") {
    MetricField g = make_metric({"x", "y"}, {"1", "0", "1"});
    ConnectionField conn = christoffel_from_metric(g);
    MatN B(2);
    B(0, 0) = 2;
    B(0, 1) = 1;
    B(1, 0) = -1;
    B(1, 1) = 0.5;
    FrameField frame = FrameField::constant(g.chart(), B);
    for (const VecN& x : {VecN{0.0, 0.0}, VecN{1.0, -2.0}})
        CHECK(transform_connection(conn, frame, x).max_abs() < 1e-14);
}

TEST_CASE("frame transformation composes") {
    const CatalogEntry& polar = catalog_get("polar-plane");
    const Chart& chart = polar.chart;
    auto coords = chart.coord_names();
    // A: expression frame; Ap: constant frame; composite = pointwise product A * Ap
    std::vector<Expression> a_entries =
        parse_all({"1", "0-0.2*r", "0.1", "1+0.3*r"}, coords);
    FrameField A = FrameField::from_exprs(chart, a_entries);
    MatN Bp(2);
    Bp(0, 0) = 1.5;
    Bp(0, 1) = 0.2;
    Bp(1, 0) = -0.3;
    Bp(1, 1) = 0.9;

    // composite entries: (A * Bp)^a_k = A^a_c Bp^c_k
    std::vector<Expression> comp;
    for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 2; ++k) {
            Expression e = a_entries[a * 2 + 0] * Expression::literal(Bp(0, k), 2);
            e = e + a_entries[a * 2 + 1] * Expression::literal(Bp(1, k), 2);
            comp.push_back(e);
        }
    FrameField composite = FrameField::from_exprs(chart, comp);

    for (const VecN& x : sample_domain_points(chart, 10)) {
        // transform by A, then change by the constant Bp in the new frame
        Tensor3N once = transform_connection(polar.conn(), A, x);
        MatN Bp_inv = inverse(Bp);
        Tensor3N twice(2);
        // constant second change: Gamma'' = Bp^-1 ( Gamma' contracted with Bp on j,k )
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    double s = 0;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            for (int cc = 0; cc < 2; ++cc)
                                s += Bp_inv(i, a) * Bp(b, j) * Bp(cc, k) * once(a, b, cc);
                    twice(i, j, k) = s;
                }
        Tensor3N direct = transform_connection(polar.conn(), composite, x);
        CHECK(max_abs_diff(twice, direct) < 1e-9);
    }
}

TEST_CASE("singular frames are rejected with the point") {
    const CatalogEntry& polar = catalog_get("polar-plane");
    // frame goes singular at r = 1
    std::vector<Expression> entries = parse_all({"r-1", "0", "0", "1"}, {"r", "ph"});
    FrameField f = FrameField::from_exprs(polar.chart, entries);
    CHECK_THROWS_AS(transform_connection(polar.conn(), f, VecN{1.0, 0.3}), SingularFrame);
    CHECK(transform_connection(polar.conn(), f, VecN{2.0, 0.3}).finite());
}

TEST_CASE("degenerate metrics raise SingularMetric at evaluation") {
    const CatalogEntry& cone = catalog_get("light-cone");
    CHECK_THROWS_AS(cone.conn().christoffels_at(VecN{1.0, 0.5}), SingularMetric);
    CHECK(cone.metric->scaled_det_at(VecN{1.0, 0.5}) == 0.0);
}

TEST_CASE("non-degeneracy holds on sampled domains for catalog metrics") {
    for (const auto& id : catalog_ids()) {
        const CatalogEntry& entry = catalog_get(id);
        if (!entry.metric || entry.facts.degenerate_metric) continue;
        for (const VecN& x : sample_domain_points(entry.chart, 20)) {
            CAPTURE(id);
            CHECK(entry.metric->scaled_det_at(x) > 1e-12);
        }
    }
}
