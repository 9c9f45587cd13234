#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "nf/catalog.hpp"
#include "nf/normal.hpp"

using namespace nf;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2 * kPi;

MatN random_invertible(int n, std::mt19937& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (;;) {
        MatN B(n);
        for (int i = 0; i < n * n; ++i) B.a[i] = dist(rng);
        for (int i = 0; i < n; ++i) B(i, i) += 2.0;  // keep it well-conditioned
        if (std::abs(scaled_determinant(B)) > 0.1) return B;
    }
}

}  // namespace

TEST_CASE("point-normal frame: flat connection, any basis") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    std::mt19937 rng(5);
    MatN B = random_invertible(3, rng);
    VecN p0{0.4, -0.2, 1.0};
    FrameField frame = normal_frame_at_point(e.conn(), p0, &B);
    // flat: the construction degenerates to the constant frame B, normal everywhere
    for (const VecN& x : sample_domain_points(e.chart, 5)) {
        NormalityReport rep = verify_frame_at_point(e.conn(), frame, x, 1e-9);
        CHECK(rep.normal);
    }
}

TEST_CASE("point-normal frame on the polar plane") {
    const CatalogEntry& e = catalog_get("polar-plane");
    VecN p0{1.0, 0.0};
    FrameField frame = normal_frame_at_point(e.conn(), p0);
    NormalityReport rep = verify_frame_at_point(e.conn(), frame, p0, 1e-9);
    CHECK(rep.normal);
    CHECK(rep.sup_norm < 1e-12);
    // right-multiplying by a constant invertible matrix preserves normality
    std::mt19937 rng(7);
    for (int trial = 0; trial < 3; ++trial) {
        MatN B = random_invertible(2, rng);
        FrameField fb = normal_frame_at_point(e.conn(), p0, &B);
        CHECK(verify_frame_at_point(e.conn(), fb, p0, 1e-9).normal);
    }
}

TEST_CASE("point-normal frames exist for connections with torsion") {
    const CatalogEntry& e = catalog_get("flat-with-torsion");
    VecN p0{0.3, -0.4};
    FrameField frame = normal_frame_at_point(e.conn(), p0);
    CHECK(verify_frame_at_point(e.conn(), frame, p0, 1e-9).normal);
}

TEST_CASE("point-normal coordinates: identity shift in flat space") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    VecN p0{1.0, 2.0, -0.5};
    CoordinateChange cc = normal_coords_at_point(e.conn(), p0);
    VecN xp = cc.to_new(VecN{1.5, 2.5, 0.5});
    CHECK(xp[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(xp[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(xp[2] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(verify_coords_at_point(e.conn(), cc, p0, 1e-8).normal);
}

TEST_CASE("point-normal coordinates in Einstein-de Sitter spacetime") {
    const CatalogEntry& e = catalog_get("einstein-de-sitter");
    VecN p0{1.0, 0.0, 0.0, 0.0};
    CoordinateChange cc = normal_coords_at_point(e.conn(), p0);
    NormalityReport rep = verify_coords_at_point(e.conn(), cc, p0, 1e-8);
    CHECK(rep.normal);
    // the two verification routes agree
    NormalityReport fd = verify_coords_at_point(e.conn(), cc, p0, 1e-6,
                                                DerivRoute::FiniteDifference);
    CHECK(std::abs(fd.sup_norm - rep.sup_norm) < 1e-6);
    CHECK(fd.normal);
}

TEST_CASE("torsion obstructs point-normal coordinates but not frames") {
    const CatalogEntry& e = catalog_get("flat-with-torsion");
    VecN p0{0.0, 0.0};
    try {
        normal_coords_at_point(e.conn(), p0);
        FAIL("expected TorsionObstruction");
    } catch (const TorsionObstruction& o) {
        CHECK(o.torsion_norm == doctest::Approx(1.0));
        CHECK(!o.hint.empty());
    }
    CHECK(verify_frame_at_point(e.conn(), normal_frame_at_point(e.conn(), p0), p0, 1e-9).normal);
}

TEST_CASE("linear and higher-order freedom preserves point normality") {
    const CatalogEntry& e = catalog_get("polar-plane");
    VecN p0{1.3, 0.7};
    std::mt19937 rng(13);
    MatN L = random_invertible(2, rng);
    PointCoordsOptions opts;
    opts.linear = &L;
    // cubic perturbation (x - p0)^3 per component
    auto cube = [&](int axis) {
        Expression d = Expression::variable(axis, 2) - Expression::literal(p0[axis], 2);
        return d * d * d;
    };
    opts.perturbations = {cube(0), cube(1)};
    CoordinateChange cc = normal_coords_at_point(e.conn(), p0, opts);
    CHECK(verify_coords_at_point(e.conn(), cc, p0, 1e-8).normal);

    // a quadratic perturbation violates the vanishing-2-jet requirement
    PointCoordsOptions bad;
    Expression q = (Expression::variable(0, 2) - Expression::literal(p0[0], 2)) *
                   (Expression::variable(0, 2) - Expression::literal(p0[0], 2));
    bad.perturbations = {q, Expression::literal(0.0, 2)};
    CHECK_THROWS_AS(normal_coords_at_point(e.conn(), p0, bad), Error);
}

TEST_CASE("Riemannian normal coordinates: origin behavior") {
    const CatalogEntry& sphere = catalog_get("sphere");
    VecN p0{kPi / 2, 0.0};
    RiemannNormalChart rnc = riemann_normal_coords(sphere.conn(), p0);
    // origin maps to zero, and zero maps back to the origin
    CHECK(rnc.change.to_new(p0).norm_inf() < 1e-10);
    CHECK((rnc.change.to_old(VecN::zero(2)) - p0).norm_inf() < 1e-12);
    // at the origin the metric is the Gram matrix and the coefficients vanish
    CHECK(rnc.gram[0] == 1.0);
    CHECK(rnc.gram[1] == 1.0);
    NormalityReport rep = verify_coords_at_point(sphere.conn(), rnc.change, VecN::zero(2), 1e-6);
    CHECK(rep.normal);
    CHECK(rep.sup_norm < 1e-9);
}

TEST_CASE("Riemannian normal coordinates reduce to a shift in flat space") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    VecN p0{0.5, -0.5, 0.25};
    MatN I3 = MatN::identity(3);
    RiemannNormalChart rnc = riemann_normal_coords(e.conn(), p0, &I3);
    VecN y{1.0, 0.3, 0.6};
    VecN xp = rnc.change.to_new(y);
    for (int i = 0; i < 3; ++i) CHECK(xp[i] == doctest::Approx(y[i] - p0[i]).epsilon(1e-10));
}

TEST_CASE("Lorentzian signature is first-class in the orthonormalization") {
    const CatalogEntry& eds = catalog_get("einstein-de-sitter");
    VecN p0{1.0, 0.0, 0.0, 0.0};
    VecN gram;
    MatN F = orthonormal_frame_at(*eds.metric, p0, &gram);
    CHECK(gram[0] == 1.0);
    for (int k = 1; k < 4; ++k) CHECK(gram[k] == -1.0);
    // columns are unit vectors for the metric at p0
    MatN G = eds.metric->value_at(p0);
    for (int k = 0; k < 4; ++k) {
        double s = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) s += F(i, k) * G(i, j) * F(j, k);
        CHECK(s == doctest::Approx(gram[k]).epsilon(1e-12));
    }
}

TEST_CASE("frame along a path: flat case keeps the initial frame") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    std::mt19937 rng(3);
    MatN A0 = random_invertible(3, rng);
    FrameAlongPath fap = normal_frame_along_path(e.conn(), e.path("p1"), A0);
    for (const MatN& A : fap.frames.matrices) CHECK(max_abs_diff(A, A0) < 1e-14);
}

TEST_CASE("frame along the equator is normal along it") {
    const CatalogEntry& sphere = catalog_get("sphere");
    IntegrationOptions opts;
    opts.steps = 2048;
    FrameAlongPath fap =
        normal_frame_along_path(sphere.conn(), sphere.path("equator"), MatN::identity(2), opts);
    NormalityReport rep = verify_frame_along_path(sphere.conn(), fap, 1e-7);
    CHECK(rep.normal);
}

TEST_CASE("along-path frames on every catalog entry, uniqueness up to a constant") {
    std::mt19937 rng(23);
    for (const auto& id : catalog_ids()) {
        const CatalogEntry& e = catalog_get(id);
        if (e.facts.degenerate_metric || e.paths.empty()) continue;
        const int n = e.chart.dim();
        IntegrationOptions opts;
        opts.steps = 1024;
        const PathCurve& path = e.path("p1");
        FrameAlongPath fap = normal_frame_along_path(e.conn(), path, MatN::identity(n), opts);
        NormalityReport rep = verify_frame_along_path(e.conn(), fap, 1e-7);
        CAPTURE(id);
        CHECK(rep.normal);
        // any other solution is A(t) C for a constant invertible C
        MatN C = random_invertible(n, rng);
        FrameAlongPath fc = normal_frame_along_path(e.conn(), path, C, opts);
        double worst = 0;
        for (std::size_t q = 0; q < fap.frames.ts.size(); q += 64)
            worst = std::max(worst, max_abs_diff(fc.frames.matrices[q],
                                                 fap.frames.matrices[q] * C));
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("one-dimensional frames follow the quadrature closed form") {
    const CatalogEntry& e = catalog_get("one-dim");
    // path x(t) = t on [0, 1]; gamma = x; A(t) = A0 exp(-t^2/2)
    const PathCurve& path = e.path("p0");
    MatN A0(1);
    A0(0, 0) = 2.0;
    IntegrationOptions opts;
    opts.steps = 1024;
    FrameAlongPath fap = normal_frame_along_path(e.conn(), path, A0, opts);
    for (std::size_t q = 0; q < fap.frames.ts.size(); q += 100) {
        double t = fap.frames.ts[q];
        double expected = 2.0 * std::exp(-0.5 * t * t);
        CHECK(fap.frames.matrices[q](0, 0) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("Fermi coordinates along a straight line are affine") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    const PathCurve& axis = e.path("p0");  // straight segment
    MatN A0 = fermi_axis_frame(e.conn(), axis);
    FrameAlongPath frame = normal_frame_along_path(e.conn(), axis, A0);
    FermiChart fermi = fermi_coords(e.conn(), axis, frame);
    NormalityReport rep = verify_fermi_on_axis(e.conn(), fermi, 1e-6, 10);
    CHECK(rep.normal);
    CHECK(rep.sup_norm < 1e-9);
    // off the axis the coefficients still vanish (flat space)
    Tensor3N off = christoffels_in_new_coords(e.conn(), fermi.change, VecN{0.4, 0.2, 0.1},
                                              DerivRoute::Jets);
    CHECK(off.max_abs() < 1e-8);
}

TEST_CASE("Fermi coordinates along the sphere equator") {
    const CatalogEntry& sphere = catalog_get("sphere");
    const PathCurve& equator = sphere.path("equator");
    MatN A0 = fermi_axis_frame(sphere.conn(), equator);
    IntegrationOptions opts;
    opts.steps = 4096;
    FrameAlongPath frame = normal_frame_along_path(sphere.conn(), equator, A0, opts);
    FermiChart fermi = fermi_coords(sphere.conn(), equator, frame);
    NormalityReport rep = verify_fermi_on_axis(sphere.conn(), fermi, 1e-6, 20);
    CHECK(rep.normal);
    // transverse distance 0.2: normality holds on the axis only
    Tensor3N off =
        christoffels_in_new_coords(sphere.conn(), fermi.change, VecN{1.0, 0.2}, DerivRoute::Jets);
    CHECK(off.max_abs() > 1e-3);
}

TEST_CASE("Fermi preconditions: geodesic axis and vanishing torsion") {
    const CatalogEntry& sphere = catalog_get("sphere");
    // latitude pi/3 is not a geodesic
    const PathCurve& lat = sphere.path("latitude-pi3");
    MatN A0 = fermi_axis_frame(sphere.conn(), lat);
    FrameAlongPath frame = normal_frame_along_path(sphere.conn(), lat, A0);
    CHECK_THROWS_AS(fermi_coords(sphere.conn(), lat, frame), Error);

    const CatalogEntry& tors = catalog_get("flat-with-torsion");
    const PathCurve& p = tors.path("p0");
    MatN B0 = fermi_axis_frame(tors.conn(), p);
    FrameAlongPath tframe = normal_frame_along_path(tors.conn(), p, B0);
    CHECK_THROWS_AS(fermi_coords(tors.conn(), p, tframe), TorsionObstruction);
}

TEST_CASE("open-set frames: flat entries succeed, curvature obstructs the sphere") {
    // polar plane on r in [0.5, 2], ph in [0, 1]
    const CatalogEntry& polar = catalog_get("polar-plane");
    Box box{VecN{0.5, 0.0}, VecN{2.0, 1.0}};
    OpenSetFrame osf = normal_frame_on_open_set(polar.conn(), box, VecN{1.0, 0.5});
    CHECK(osf.grid == 11);
    NormalityReport rep = verify_frame_on_grid(polar.conn(), osf.field, osf.nodes, 1e-6);
    CHECK(rep.normal);

    const CatalogEntry& sphere = catalog_get("sphere");
    Box sbox{VecN{1.0, 0.5}, VecN{2.0, 1.5}};
    try {
        normal_frame_on_open_set(sphere.conn(), sbox, VecN{1.5, 1.0});
        FAIL("expected CurvatureObstruction");
    } catch (const CurvatureObstruction& o) {
        CHECK(o.curvature_norm > 0.1);
    }
}

TEST_CASE("obstruction monotonicity: shrinking the box cannot clear a curved point") {
    const CatalogEntry& sphere = catalog_get("sphere");
    VecN center{1.2, 0.8};
    for (double half : {0.5, 0.25, 0.125, 0.01}) {
        Box box{VecN{center[0] - half, center[1] - half}, VecN{center[0] + half, center[1] + half}};
        CHECK_THROWS_AS(normal_frame_on_open_set(sphere.conn(), box, center),
                        CurvatureObstruction);
    }
}

TEST_CASE("open-set coordinates recover Cartesian up to an affine map") {
    const CatalogEntry& polar = catalog_get("polar-plane");
    Box box{VecN{0.5, 0.0}, VecN{2.0, 1.0}};
    OpenSetCoords osc = normal_coords_on_open_set(polar.conn(), box, VecN{1.0, 0.5});
    CHECK(osc.mixed_partial_defect < 1e-8);

    // fit cartesian(node) ~ M x'(node) + d by least squares over the grid
    const int N = static_cast<int>(osc.frame.nodes.size());
    std::vector<VecN> xp(N), cart(N);
    for (int q = 0; q < N; ++q) {
        const VecN& node = osc.frame.nodes[q];
        xp[q] = osc.change.to_new(node);
        cart[q] = VecN{node[0] * std::cos(node[1]), node[0] * std::sin(node[1])};
    }
    // normal equations over the augmented basis (x'0, x'1, 1)
    MatN ata(3);
    for (int q = 0; q < N; ++q) {
        double b[3] = {xp[q][0], xp[q][1], 1.0};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) ata(i, j) += b[i] * b[j];
    }
    double residual = 0;
    for (int dim = 0; dim < 2; ++dim) {
        VecN atb(3);
        for (int q = 0; q < N; ++q) {
            double b[3] = {xp[q][0], xp[q][1], 1.0};
            for (int i = 0; i < 3; ++i) atb[i] += b[i] * cart[q][dim];
        }
        VecN sol = solve(ata, atb);
        for (int q = 0; q < N; ++q) {
            double fit = sol[0] * xp[q][0] + sol[1] * xp[q][1] + sol[2];
            residual = std::max(residual, std::abs(fit - cart[q][dim]));
        }
    }
    CHECK(residual < 1e-6);
}

TEST_CASE("open-set coordinates: identity in Cartesian flat space") {
    const CatalogEntry& e = catalog_get("euclidean-cartesian");
    Box box{VecN{-1.0, -1.0, -1.0}, VecN{1.0, 1.0, 1.0}};
    OpenSetOptions opts;
    opts.grid = 3;
    OpenSetCoords osc = normal_coords_on_open_set(e.conn(), box, VecN{0.0, 0.0, 0.0}, opts);
    VecN probe{0.7, -0.3, 0.5};
    VecN xp = osc.change.to_new(probe);
    for (int i = 0; i < 3; ++i) CHECK(xp[i] == doctest::Approx(probe[i]).epsilon(1e-12));
}

TEST_CASE("torsion obstructs open-set coordinates while the frame succeeds") {
    const CatalogEntry& e = catalog_get("flat-with-torsion");
    Box box{VecN{-1.0, -1.0}, VecN{1.0, 1.0}};
    VecN base{0.0, 0.0};
    OpenSetFrame osf = normal_frame_on_open_set(e.conn(), box, base);
    NormalityReport rep = verify_frame_on_grid(e.conn(), osf.field, osf.nodes, 1e-6);
    CHECK(rep.normal);
    CHECK_THROWS_AS(normal_coords_on_open_set(e.conn(), box, base), TorsionObstruction);
}

TEST_CASE("residual freedom: a constant basis change preserves open-set verdicts") {
    const CatalogEntry& polar = catalog_get("polar-plane");
    Box box{VecN{0.8, 0.2}, VecN{1.8, 0.9}};
    std::mt19937 rng(31);
    MatN B = random_invertible(2, rng);
    OpenSetOptions opts;
    opts.base_frame = &B;
    OpenSetFrame osf = normal_frame_on_open_set(polar.conn(), box, VecN{1.0, 0.5}, opts);
    NormalityReport rep = verify_frame_on_grid(polar.conn(), osf.field, osf.nodes, 1e-6);
    CHECK(rep.normal);
}

TEST_CASE("patch normality: plane accepted, latitude band rejected") {
    const CatalogEntry& euc = catalog_get("euclidean-cartesian");
    Chart plane_param(2, {"u", "v"});
    plane_param.set_bounds(0, -1, 1);
    plane_param.set_bounds(1, -1, 1);
    PatchSpec plane{euc.chart, plane_param, parse_all({"u", "v", "0.0"}, {"u", "v"})};
    PatchFrameResult res = submanifold_normality(euc.conn(), plane);
    CHECK(res.report.normal);
    for (const auto& l : res.loops) CHECK(l.defect < 1e-10);

    const CatalogEntry& sphere = catalog_get("sphere");
    Chart band_param(2, {"u", "v"});
    band_param.set_bounds(0, kPi / 3, kPi / 2);
    band_param.set_period(1, kTwoPi);
    PatchSpec band{sphere.chart, band_param, parse_all({"u", "v"}, {"u", "v"})};
    try {
        submanifold_normality(sphere.conn(), band);
        FAIL("expected HolonomyObstruction");
    } catch (const HolonomyObstruction& o) {
        // the worst loop is the pi/3 latitude circle; rotation by pi gives defect 2
        CHECK(o.defect == doctest::Approx(2.0).epsilon(1e-6));
    }
}

TEST_CASE("1-dimensional patches always pass") {
    const CatalogEntry& sphere = catalog_get("sphere");
    Chart circle_param(1, {"u"});
    circle_param.set_period(0, kTwoPi);
    PatchSpec equator{sphere.chart, circle_param, parse_all({"pi/2", "u"}, {"u"})};
    PatchFrameResult res = submanifold_normality(sphere.conn(), equator);
    CHECK(res.loops.empty());
    CHECK(res.report.normal);

    // even on a non-geodesic circle, where winding transport is nontrivial
    Chart lat_param(1, {"u"});
    lat_param.set_period(0, kTwoPi);
    PatchSpec latitude{sphere.chart, lat_param, parse_all({"pi/3", "u"}, {"u"})};
    CHECK(submanifold_normality(sphere.conn(), latitude).report.normal);
}

TEST_CASE("full-dimensional patches run the loop battery") {
    const CatalogEntry& polar = catalog_get("polar-plane");
    Chart param(2, {"u", "v"});
    param.set_bounds(0, 0.6, 1.6);
    param.set_bounds(1, 0.1, 0.9);
    PatchSpec full{polar.chart, param, parse_all({"u", "v"}, {"u", "v"})};
    PatchFrameResult res = submanifold_normality(polar.conn(), full);
    CHECK(res.report.normal);
    CHECK(!res.loops.empty());
}

TEST_CASE("frame route and finite-difference route agree for coordinate changes") {
    const CatalogEntry& polar = catalog_get("polar-plane");
    VecN p0{1.2, 0.4};
    CoordinateChange cc = normal_coords_at_point(polar.conn(), p0);
    for (const VecN& x : {p0, VecN{1.3, 0.5}, VecN{1.1, 0.35}}) {
        Tensor3N jets = christoffels_in_new_coords(polar.conn(), cc, x, DerivRoute::Jets);
        Tensor3N fd = christoffels_in_new_coords(polar.conn(), cc, x,
                                                 DerivRoute::FiniteDifference);
        CHECK(max_abs_diff(jets, fd) < 1e-6);
    }
    // numeric-inverse route on the sphere normal chart
    const CatalogEntry& sphere = catalog_get("sphere");
    RiemannNormalChart rnc = riemann_normal_coords(sphere.conn(), VecN{kPi / 2, 0.0});
    for (const VecN& xp : {VecN{0.0, 0.0}, VecN{0.1, -0.05}}) {
        Tensor3N jets = christoffels_in_new_coords(sphere.conn(), rnc.change, xp, DerivRoute::Jets);
        Tensor3N fd =
            christoffels_in_new_coords(sphere.conn(), rnc.change, xp, DerivRoute::FiniteDifference);
        CHECK(max_abs_diff(jets, fd) < 1e-6);
    }
}
