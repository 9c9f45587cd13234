#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "nf/expr.hpp"

using namespace nf;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Central finite-difference oracle for gradients (step 1e-5) and Hessians
// (step 1e-3), independent of the jet propagation path.
VecN fd_gradient(const Expression& e, const VecN& x, double h = 1e-5) {
    VecN g(x.n);
    for (int i = 0; i < x.n; ++i) {
        VecN xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (e.eval(xp) - e.eval(xm)) / (2 * h);
    }
    return g;
}

MatN fd_hessian(const Expression& e, const VecN& x, double h = 1e-3) {
    MatN H(x.n);
    for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < x.n; ++j) {
            if (i == j) {
                VecN xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                H(i, i) = (e.eval(xp) - 2 * e.eval(x) + e.eval(xm)) / (h * h);
                continue;
            }
            VecN xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[i] += h;
            xpp[j] += h;
            xpm[i] += h;
            xpm[j] -= h;
            xmp[i] -= h;
            xmp[j] += h;
            xmm[i] -= h;
            xmm[j] -= h;
            H(i, j) = (e.eval(xpp) - e.eval(xpm) - e.eval(xmp) + e.eval(xmm)) / (4 * h * h);
        }
    return H;
}

void check_jet_against_fd(const Expression& e, const VecN& x, double grad_tol = 1e-6,
                          double hess_tol = 1e-6) {
    JetValue j = e.eval_jet(x);
    VecN fg = fd_gradient(e, x);
    MatN fh = fd_hessian(e, x);
    for (int i = 0; i < x.n; ++i) {
        double denom = 1.0 + std::abs(j.g[i]);
        CHECK(std::abs(j.g[i] - fg[i]) / denom < grad_tol);
        for (int k = 0; k < x.n; ++k) {
            double hd = 1.0 + std::abs(j.hess(i, k));
            CHECK(std::abs(j.hess(i, k) - fh(i, k)) / hd < hess_tol);
        }
    }
}

}  // namespace

TEST_CASE("grammar fixes precedence and associativity") {
    std::vector<std::string> coords{"r"};
    // -r^2 is -(r^2), not (-r)^2
    Expression e = Expression::parse("-r^2", coords);
    CHECK(e.eval(VecN{3.0}) == doctest::Approx(-9.0));
    // ^ is right-associative: 2^3^2 = 2^9
    Expression f = Expression::parse("2^3^2", coords);
    CHECK(f.eval(VecN{0.0}) == doctest::Approx(512.0));
    // integer exponents accept negative bases
    Expression g = Expression::parse("(0-2)^3", coords);
    CHECK(g.eval(VecN{0.0}) == doctest::Approx(-8.0));
    Expression h = Expression::parse("r^-2", coords);
    CHECK(h.eval(VecN{2.0}) == doctest::Approx(0.25));
    // whitespace is insignificant
    Expression w = Expression::parse("  1 +  2*r ", coords);
    CHECK(w.eval(VecN{5.0}) == doctest::Approx(11.0));
}

TEST_CASE("sin(th)^2 parses as pow of sin") {
    Expression e = Expression::parse("sin(th)^2", {"th", "ph"});
    CHECK(e.eval(VecN{kPi / 2, 0.0}) == doctest::Approx(1.0));
    CHECK(e.eval(VecN{kPi / 6, 0.0}) == doctest::Approx(0.25));
}

TEST_CASE("unknown identifiers are rejected with the offending name") {
    std::vector<std::string> coords{"t", "r", "th", "ph"};
    try {
        Expression::parse("1/(1-2*M/r)", coords);
        FAIL("expected UnknownIdentifier");
    } catch (const UnknownIdentifier& err) {
        CHECK(err.name == "M");
    }
    // with the constant supplied, the same text parses
    Expression e = Expression::parse("1/(1-2*M/r)", coords, {{"M", 1.0}});
    CHECK(e.eval(VecN{0, 4, 0, 0}) == doctest::Approx(2.0));
}

TEST_CASE("syntax errors carry a byte offset") {
    try {
        Expression::parse("1 + * 2", {"x"});
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& err) {
        CHECK(err.offset == 4);
    }
    CHECK_THROWS_AS(Expression::parse("", {"x"}), SyntaxError);
    CHECK_THROWS_AS(Expression::parse("sin x", {"x"}), SyntaxError);
    CHECK_THROWS_AS(Expression::parse("(1+2", {"x"}), SyntaxError);
}

TEST_CASE("product rule: x*y at (2,3)") {
    Expression e = Expression::parse("x*y", {"x", "y"});
    JetValue j = e.eval_jet(VecN{2.0, 3.0});
    CHECK(j.v == doctest::Approx(6.0));
    CHECK(j.g[0] == doctest::Approx(3.0));
    CHECK(j.g[1] == doctest::Approx(2.0));
    CHECK(j.hess(0, 1) == doctest::Approx(1.0));
    CHECK(j.hess(0, 0) == doctest::Approx(0.0));
    CHECK(j.hess(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("sin jet at pi/2") {
    Expression e = Expression::parse("sin(th)", {"th"});
    JetValue j = e.eval_jet(VecN{kPi / 2});
    CHECK(j.v == doctest::Approx(1.0));
    CHECK(j.g[0] == doctest::Approx(0.0));
    CHECK(j.hess(0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("r^2*sin(th)^2 jet matches the finite-difference oracle") {
    Expression e = Expression::parse("r^2*sin(th)^2", {"r", "th"});
    check_jet_against_fd(e, VecN{2.0, kPi / 3});
}

TEST_CASE("polynomials of degree <= 2 are exact to machine precision") {
    Expression e = Expression::parse("3*x^2 - 2*x*y + y^2 + 5*x - 7", {"x", "y"});
    JetValue j = e.eval_jet(VecN{1.25, -0.75});
    CHECK(j.g[0] == 3 * 2 * 1.25 - 2 * -0.75 + 5);  // exact
    CHECK(j.g[1] == -2 * 1.25 + 2 * -0.75);
    CHECK(j.hess(0, 0) == 6.0);
    CHECK(j.hess(0, 1) == -2.0);
    CHECK(j.hess(1, 1) == 2.0);
}

TEST_CASE("fractional powers need a positive base; derivative matches") {
    Expression e = Expression::parse("t^(4/3)", {"t"});
    JetValue j = e.eval_jet(VecN{2.0});
    CHECK(j.v == doctest::Approx(std::pow(2.0, 4.0 / 3.0)));
    CHECK(j.g[0] == doctest::Approx(4.0 / 3.0 * std::pow(2.0, 1.0 / 3.0)));
    CHECK_THROWS_AS(e.eval(VecN{-2.0}), DomainError);
}

TEST_CASE("domain errors instead of silent non-finite values") {
    std::vector<std::string> coords{"x"};
    CHECK_THROWS_AS(Expression::parse("log(x)", coords).eval(VecN{-1.0}), DomainError);
    CHECK_THROWS_AS(Expression::parse("log(x)", coords).eval(VecN{0.0}), DomainError);
    CHECK_THROWS_AS(Expression::parse("sqrt(x)", coords).eval(VecN{-4.0}), DomainError);
    CHECK_THROWS_AS(Expression::parse("1/x", coords).eval(VecN{0.0}), DomainError);
    CHECK_THROWS_AS(Expression::parse("exp(x)", coords).eval(VecN{1e9}), DomainError);
    // 1/(1/x) at 0 must not silently return 0
    CHECK_THROWS_AS(Expression::parse("1/(1/x)", coords).eval(VecN{0.0}), DomainError);
    // sqrt(0) is a fine value but has no derivative
    CHECK(Expression::parse("sqrt(x)", coords).eval(VecN{0.0}) == 0.0);
    CHECK_THROWS_AS(Expression::parse("sqrt(x)", coords).eval_jet(VecN{0.0}), DomainError);
}

TEST_CASE("round-trip: parse(render(e)) evaluates identically") {
    std::vector<std::string> coords{"r", "th"};
    std::vector<std::string> sources{
        "r^2*sin(th)^2",  "-r^2",      "1/(1+r^2)",        "r^(4/3)+cosh(th)",
        "sin(th)/(2-r)",  "2^3^2 + r", "-(r+th)*(r-th)",   "sqrt(r^2+1)-exp(-th)",
        "tan(th/4)+r/th", "abs(r)+1",  "r-th-1-2*(r-2/th)"};
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> dist(0.3, 1.4);
    for (const auto& src : sources) {
        Expression e = Expression::parse(src, coords);
        Expression back = Expression::parse(e.render(), coords);
        for (int trial = 0; trial < 50; ++trial) {
            VecN x{dist(rng), dist(rng)};
            CAPTURE(src);
            CAPTURE(e.render());
            CHECK(back.eval(x) == doctest::Approx(e.eval(x)).epsilon(1e-14));
        }
    }
}

TEST_CASE("jets match finite differences on a catalog of expression shapes") {
    std::vector<std::string> coords{"a", "b"};
    std::vector<std::string> sources{
        "sinh(a)*cos(b)", "exp(a-b^2)",        "log(2+a)*sqrt(3+b)", "tanh(a*b)",
        "1/(2+sin(a))",   "(a+b)^3/(1+a^2)",   "cosh(b)/(3+a)",      "a^2+b^2-2*a*b",
        "tan(a/3)+b",     "sqrt(a^2+b^2+0.5)",
    };
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-0.8, 0.8);
    for (const auto& src : sources) {
        Expression e = Expression::parse(src, coords);
        for (int trial = 0; trial < 100; ++trial) {
            VecN x{dist(rng), dist(rng)};
            CAPTURE(src);
            // 4e-6 on Hessians: the cross-stencil truncation of the oracle
            // itself dominates for these stress shapes at step 1e-3
            check_jet_against_fd(e, x, 1e-6, 4e-6);
        }
    }
}

TEST_CASE("linearity of the jet in the expression") {
    std::vector<std::string> coords{"x", "y"};
    Expression e1 = Expression::parse("sin(x)*y", coords);
    Expression e2 = Expression::parse("exp(y-x)", coords);
    // 2*e1 - 3*e2 assembled textually
    Expression combo = Expression::parse("2*(sin(x)*y) - 3*(exp(y-x))", coords);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        VecN x{dist(rng), dist(rng)};
        JetValue j1 = e1.eval_jet(x), j2 = e2.eval_jet(x), jc = combo.eval_jet(x);
        CHECK(jc.v == doctest::Approx(2 * j1.v - 3 * j2.v).epsilon(1e-14));
        for (int i = 0; i < 2; ++i) {
            CHECK(jc.g[i] == doctest::Approx(2 * j1.g[i] - 3 * j2.g[i]).epsilon(1e-14));
            for (int k = i; k < 2; ++k)
                CHECK(jc.hess(i, k) ==
                      doctest::Approx(2 * j1.hess(i, k) - 3 * j2.hess(i, k)).epsilon(1e-14));
        }
    }
}

TEST_CASE("constants fold and pi is built in") {
    Expression e = Expression::parse("pi/2", {"t"});
    CHECK(e.as_constant().has_value());
    CHECK(*e.as_constant() == doctest::Approx(kPi / 2));
    // folding must not swallow evaluation-time domain errors
    CHECK_THROWS_AS(Expression::parse("log(0-1)", {"t"}).eval(VecN{0.0}), DomainError);
}

TEST_CASE("programmatic builders compose") {
    // A(x) = 2 + 3*(x - 1) built without text
    Expression e = Expression::literal(2.0, 1) +
                   Expression::literal(3.0, 1) *
                       (Expression::variable(0, 1) - Expression::literal(1.0, 1));
    CHECK(e.eval(VecN{2.0}) == doctest::Approx(5.0));
    Jet1 j = e.eval_jet1(VecN{2.0});
    CHECK(j.g[0] == doctest::Approx(3.0));
    // and render round-trips through the default variable names
    Expression back = Expression::parse(e.render(), {"x0"});
    CHECK(back.eval(VecN{-1.0}) == doctest::Approx(e.eval(VecN{-1.0})));
}
