#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "nf/catalog.hpp"
#include "nf/transport.hpp"

using namespace nf;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2 * kPi;

double metric_norm(const MetricField& g, const VecN& x, const VecN& v) {
    MatN G = g.value_at(x);
    double s = 0;
    for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < x.n; ++j) s += G(i, j) * v[i] * v[j];
    return s;
}

// latitude circle on the sphere as an expression path
PathCurve latitude_loop(const CatalogEntry& sphere, double th0) {
    return PathCurve::from_exprs(
        sphere.chart,
        {Expression::literal(th0, 1), Expression::variable(0, 1)}, 0.0, kTwoPi);
}

// rotation angle of the holonomy matrix in the orthonormalized tangent plane
double sphere_rotation_angle(const MatN& H, double th0) {
    double s = std::sin(th0);
    double m00 = H(0, 0);
    double m10 = s * H(1, 0);
    return std::atan2(m10, m00);
}

double expected_latitude_angle(double th0) {
    double alpha = std::fmod(kTwoPi * (1 - std::cos(th0)), kTwoPi);
    return std::min(alpha, kTwoPi - alpha);  // comparable with |atan2| in [0, pi]
}

}  // namespace

TEST_CASE("flat transport keeps the vector constant") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    IntegrationOptions opts;
    opts.steps = 64;
    for (const auto& [name, path] : e.paths) {
        VectorAlongPath res = parallel_transport(e.conn(), path, VecN{1.0, -2.0, 0.5}, opts);
        CAPTURE(name);
        for (const VecN& u : res.vectors) {
            CHECK(u[0] == 1.0);
            CHECK(u[1] == -2.0);
            CHECK(u[2] == 0.5);
        }
    }
}

TEST_CASE("transport around the equator returns the start vector") {
    const CatalogEntry& sphere = catalog_get("sphere");
    IntegrationOptions opts;
    opts.steps = 2000;
    VectorAlongPath res =
        parallel_transport(sphere.conn(), sphere.path("equator"), VecN{1.0, 0.0}, opts);
    CHECK(std::abs(res.at_end()[0] - 1.0) < 1e-8);
    CHECK(std::abs(res.at_end()[1]) < 1e-8);
}

TEST_CASE("latitude transport rotates by 2 pi (1 - cos th0)") {
    const CatalogEntry& sphere = catalog_get("sphere");
    // fine-step oracle run first: 1e5 steps confirm the closed form
    for (double th0 : {kPi / 3, 1.0, 1.9}) {
        PathCurve loop = latitude_loop(sphere, th0);
        IntegrationOptions fine;
        fine.steps = 100000;
        HolonomyResult h = holonomy(sphere.conn(), loop, fine);
        double angle = std::abs(sphere_rotation_angle(h.matrix, th0));
        CAPTURE(th0);
        CHECK(angle == doctest::Approx(expected_latitude_angle(th0)).epsilon(1e-9));
    }
}

TEST_CASE("norm preservation, linearity, reversal of transport") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (const char* id : {"sphere", "schwarzschild", "polar-plane", "einstein-de-sitter"}) {
        const CatalogEntry& e = catalog_get(id);
        const int n = e.chart.dim();
        const PathCurve& path = e.path("p0");
        IntegrationOptions opts;
        opts.steps = 400;
        VecN u(n), w(n);
        for (int i = 0; i < n; ++i) {
            u[i] = dist(rng);
            w[i] = dist(rng);
        }
        double alpha = 0.7, beta = -1.3;

        VectorAlongPath tu = parallel_transport(e.conn(), path, u, opts);
        VectorAlongPath tw = parallel_transport(e.conn(), path, w, opts);
        VectorAlongPath tc = parallel_transport(e.conn(), path, alpha * u + beta * w, opts);

        // linearity at the endpoint
        for (int i = 0; i < n; ++i) {
            CAPTURE(id);
            CHECK(std::abs(tc.at_end()[i] - alpha * tu.at_end()[i] - beta * tw.at_end()[i]) <
                  1e-10);
        }

        // norm preservation along the samples (metric-derived connections)
        if (e.metric) {
            double norm0 = metric_norm(*e.metric, path.point(path.t_begin()), u);
            for (std::size_t q = 0; q < tu.ts.size(); ++q) {
                double norm_t = metric_norm(*e.metric, path.point(tu.ts[q]), tu.vectors[q]);
                CAPTURE(id);
                CHECK(std::abs(norm_t - norm0) < 1e-8);
            }
        }

        // reversal: transport forward then along the reversed path
        VectorAlongPath back = parallel_transport(e.conn(), path.reversed(), tu.at_end(), opts);
        for (int i = 0; i < n; ++i) {
            CAPTURE(id);
            CHECK(std::abs(back.at_end()[i] - u[i]) < 1e-8);
        }
    }
}

TEST_CASE("integrator order: halving the step cuts the error ~16x") {
    const CatalogEntry& sphere = catalog_get("sphere");
    PathCurve loop = latitude_loop(sphere, kPi / 3);
    VecN v0{1.0, 0.0};
    IntegrationOptions fine;
    fine.steps = 100000;
    VecN ref = parallel_transport(sphere.conn(), loop, v0, fine).at_end();
    auto endpoint_err = [&](int steps) {
        IntegrationOptions opts;
        opts.steps = steps;
        VecN u = parallel_transport(sphere.conn(), loop, v0, opts).at_end();
        return (u - ref).norm_inf();
    };
    double e200 = endpoint_err(200), e400 = endpoint_err(400);
    double ratio = e200 / e400;
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);
}

TEST_CASE("Richardson check warns when steps are too coarse") {
    const CatalogEntry& sphere = catalog_get("sphere");
    IntegrationOptions coarse;
    coarse.steps = 16;
    coarse.richardson_check = true;
    VectorAlongPath res =
        parallel_transport(sphere.conn(), latitude_loop(sphere, 1.0), VecN{1.0, 0.2}, coarse);
    CHECK(!res.warnings.empty());
    IntegrationOptions ok;
    ok.steps = 4000;
    ok.richardson_check = true;
    VectorAlongPath res2 =
        parallel_transport(sphere.conn(), latitude_loop(sphere, 1.0), VecN{1.0, 0.2}, ok);
    CHECK(res2.warnings.empty());
}

TEST_CASE("geodesics in flat space are straight lines, exactly") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    IntegrationOptions opts;
    opts.steps = 50;
    VecN x0{0.1, -0.4, 1.0}, v0{0.5, 1.0, -0.25};
    GeodesicResult res = geodesic(e.conn(), x0, v0, 2.0, opts);
    for (double t : {0.0, 0.5, 1.0, 2.0}) {
        VecN x = res.path.point(t);
        for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(x0[i] + t * v0[i]).epsilon(1e-15));
    }
}

TEST_CASE("the equator is a geodesic of the sphere") {
    const CatalogEntry& sphere = catalog_get("sphere");
    IntegrationOptions opts;
    opts.steps = 800;
    GeodesicResult res = geodesic(sphere.conn(), VecN{kPi / 2, 0.0}, VecN{0.0, 1.0}, kTwoPi, opts);
    for (double t : {1.0, 2.5, 5.0, kTwoPi}) {
        VecN x = res.path.point(t);
        CHECK(std::abs(x[0] - kPi / 2) < 1e-12);
        CHECK(x[1] == doctest::Approx(t).epsilon(1e-10));
    }
}

TEST_CASE("geodesics conserve the metric speed") {
    for (const char* id : {"sphere", "schwarzschild", "einstein-de-sitter"}) {
        const CatalogEntry& e = catalog_get(id);
        const int n = e.chart.dim();
        VecN x0(n), v0(n);
        for (int i = 0; i < n; ++i) {
            x0[i] = 0.5 * (e.chart.sample_lower(i) + e.chart.sample_upper(i));
            v0[i] = 0.1 + 0.05 * i;
        }
        IntegrationOptions opts;
        opts.steps = 800;
        GeodesicResult res = geodesic(e.conn(), x0, v0, 1.0, opts);
        double c0 = metric_norm(*e.metric, x0, v0);
        for (double t : {0.25, 0.5, 0.75, 1.0}) {
            VecN x, v;
            res.path.point_and_tangent(t, x, v);
            CAPTURE(id);
            CHECK(std::abs(metric_norm(*e.metric, x, v) - c0) < 1e-7);
        }
    }
}

TEST_CASE("Schwarzschild radial infall conserves the energy integral") {
    const CatalogEntry& sch = catalog_get("schwarzschild");
    double M = 1.0;
    VecN x0{0.0, 8.0, kPi / 2, 0.0};
    // timelike radial data: (1-2M/r) tdot^2 - rdot^2/(1-2M/r) = 1
    double f0 = 1 - 2 * M / x0[1];
    double rdot = -0.2;
    double tdot = std::sqrt((1 + rdot * rdot / f0) / f0);
    VecN v0{tdot, rdot, 0.0, 0.0};
    IntegrationOptions opts;
    opts.steps = 2000;
    GeodesicResult res = geodesic(sch.conn(), x0, v0, 8.0, opts);
    double E0 = f0 * tdot;
    for (double t : {2.0, 4.0, 6.0, 8.0}) {
        VecN x, v;
        res.path.point_and_tangent(t, x, v);
        double E = (1 - 2 * M / x[1]) * v[0];
        CHECK(std::abs(E - E0) < 1e-7);
    }
}

TEST_CASE("exponential map basics") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    VecN x0{0.5, -1.0, 2.0};
    CHECK((exp_map(e.conn(), x0, VecN{0.0, 0.0, 0.0}) - x0).norm_inf() == 0.0);
    VecN v{0.3, 0.7, -0.2};
    VecN y = exp_map(e.conn(), x0, v);
    // no truncation error on linear solutions; only stepwise summation rounding
    for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(x0[i] + v[i]).epsilon(1e-13));
}

TEST_CASE("exp moves by the metric length of the argument") {
    const CatalogEntry& sphere = catalog_get("sphere");
    VecN x0{0.3, 0.0};  // near the pole but inside the domain
    VecN dir{0.6, 0.8};
    double norm = std::sqrt(metric_norm(*sphere.metric, x0, dir));
    double s = 0.25;
    VecN v = (s / norm) * dir;
    IntegrationOptions opts;
    opts.steps = 2048;
    GeodesicResult res = geodesic(sphere.conn(), x0, v, 1.0, opts);
    // length re-integration oracle: composite Simpson over |gamma'|_g
    int segments = 256;
    double len = 0;
    auto speed = [&](double t) {
        VecN x, vv;
        res.path.point_and_tangent(t, x, vv);
        return std::sqrt(metric_norm(*sphere.metric, x, vv));
    };
    for (int q = 0; q < segments; ++q) {
        double a = static_cast<double>(q) / segments, b = static_cast<double>(q + 1) / segments;
        len += (b - a) / 6.0 * (speed(a) + 4 * speed(0.5 * (a + b)) + speed(b));
    }
    CHECK(std::abs(len - s) / s < 1e-7);
}

TEST_CASE("log map: trivial, flat, and equatorial closed forms") {
    const CatalogEntry& euc = catalog_get("euclidean-cartesian");
    VecN x0{0.2, 0.3, -0.5};
    CHECK(log_map(euc.conn(), x0, x0, 1e-12).norm_inf() < 1e-12);
    VecN y{1.0, -0.7, 0.1};
    VecN v = log_map(euc.conn(), x0, y, 1e-12);
    for (int i = 0; i < 3; ++i) CHECK(v[i] == doctest::Approx(y[i] - x0[i]).epsilon(1e-12));

    const CatalogEntry& sphere = catalog_get("sphere");
    VecN p0{kPi / 2, 0.0};
    VecN vs = log_map(sphere.conn(), p0, VecN{kPi / 2, 0.3}, 1e-11);
    CHECK(std::abs(vs[0]) < 1e-8);
    CHECK(vs[1] == doctest::Approx(0.3).epsilon(1e-8));
}

TEST_CASE("holonomy of flat connections is the identity, exactly for constant coefficients") {
    const CatalogEntry& torus = catalog_get("torus");
    PathCurve loop = coordinate_rectangle_loop(torus.chart, VecN{1.0, 1.0}, 0, 1, 0.8);
    IntegrationOptions opts;
    opts.steps = 256;
    HolonomyResult h = holonomy(torus.conn(), loop, opts);
    CHECK(h.defect == 0.0);

    const CatalogEntry& flat_t = catalog_get("flat-with-torsion");
    HolonomyResult h2 = holonomy(
        flat_t.conn(), coordinate_rectangle_loop(flat_t.chart, VecN{0.0, 0.0}, 0, 1, 0.5), opts);
    CHECK(h2.defect < 1e-13);
}

TEST_CASE("open paths are rejected by holonomy") {
    const CatalogEntry& sphere = catalog_get("sphere");
    CHECK_THROWS_AS(holonomy(sphere.conn(), sphere.path("p0")), NotALoop);
}

TEST_CASE("small-loop defect scales quadratically with the side length") {
    const CatalogEntry& sphere = catalog_get("sphere");
    VecN x0{1.1, 0.7};
    IntegrationOptions opts;
    opts.steps = 1024;
    double defects[3];
    double epss[3] = {0.1, 0.05, 0.025};
    for (int q = 0; q < 3; ++q) {
        HolonomyResult h = holonomy(
            sphere.conn(), coordinate_rectangle_loop(sphere.chart, x0, 0, 1, epss[q]), opts);
        defects[q] = h.defect;
    }
    double slope = std::log(defects[0] / defects[2]) / std::log(epss[0] / epss[2]);
    CHECK(slope > 1.9);
    CHECK(slope < 2.1);
}

TEST_CASE("paths leaving the domain raise DomainExit") {
    const CatalogEntry& sch = catalog_get("schwarzschild");
    // heading into the horizon
    VecN x0{0.0, 3.0, kPi / 2, 0.0};
    VecN v0{0.0, -1.0, 0.0, 0.0};
    IntegrationOptions opts;
    opts.steps = 400;
    CHECK_THROWS_AS(geodesic(sch.conn(), x0, v0, 5.0, opts), DomainExit);
}

TEST_CASE("transport requires a minimum step count") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    IntegrationOptions opts;
    opts.steps = 8;
    CHECK_THROWS_AS(parallel_transport(e.conn(), e.path("p0"), VecN{1, 0, 0}, opts), OutOfRange);
}
