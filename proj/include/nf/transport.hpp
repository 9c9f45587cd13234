#pragma once
#include <optional>
#include <string>
#include <vector>

#include "nf/geometry.hpp"
#include "nf/path.hpp"

// ODE layer: parallel transport, geodesics, exponential/logarithm maps, and
// loop holonomy. All integrations are fixed-step classical 4th-order
// Runge-Kutta; an optional Richardson doubling check appends a warning when
// the estimated endpoint error exceeds a tolerance.

namespace nf {

struct IntegrationOptions {
    int steps = 400;
    bool richardson_check = false;
    double warn_tol = 1e-8;
};

struct VectorAlongPath {
    std::vector<double> ts;
    std::vector<VecN> vectors;
    std::vector<std::string> warnings;
    const VecN& at_end() const { return vectors.back(); }
};

// Solves u'^i + Gamma(i,j,k) gamma'^j u^k = 0 along the path, u(a) = v0.
VectorAlongPath parallel_transport(const ConnectionField& c, const PathCurve& path, const VecN& v0,
                                   const IntegrationOptions& opts = {});

// Transports a full matrix column-by-column (columns are independent
// solutions); U(a) = U0.
struct MatrixAlongPath {
    std::vector<double> ts;
    std::vector<MatN> matrices;
    std::vector<MatN> derivatives;  // exact ODE right-hand sides at the samples
    std::vector<std::string> warnings;
    MatN at(double t) const;        // cubic Hermite between samples
    void at_with_deriv(double t, MatN& U, MatN& Udot) const;
    double t_begin() const { return ts.front(); }
    double t_end() const { return ts.back(); }
};
MatrixAlongPath transport_matrix(const ConnectionField& c, const PathCurve& path, const MatN& U0,
                                 const IntegrationOptions& opts = {});

struct GeodesicResult {
    PathCurve path;  // sampled, tangents included
    std::vector<std::string> warnings;
};

// Solves x''^i + Gamma(i,j,k) x'^j x'^k = 0 from (x0, v0) over [0, t_max].
GeodesicResult geodesic(const ConnectionField& c, const VecN& x0, const VecN& v0, double t_max,
                        const IntegrationOptions& opts = {});

// exp_x0(v) = endpoint of the unit-parameter geodesic with initial velocity v.
VecN exp_map(const ConnectionField& c, const VecN& x0, const VecN& v,
             const IntegrationOptions& opts = {});

// Joint integration of the geodesic and linearized variations; returns the
// endpoint together with d(endpoint)/d(variation) for each initial variation
// (dx0, dv0). This is the exact-Jacobian backbone for the logarithm map and
// for derivatives of numeric coordinate maps.
struct GeodesicVariation {
    VecN dx0, dv0;
};
struct GeodesicWithVariations {
    VecN x_end, v_end;
    std::vector<VecN> dx_end, dv_end;  // one per requested variation
};
GeodesicWithVariations geodesic_with_variations(const ConnectionField& c, const VecN& x0,
                                                const VecN& v0,
                                                const std::vector<GeodesicVariation>& variations,
                                                double t_end,
                                                const IntegrationOptions& opts = {});

// Damped Newton solution of exp_x0(v) = y; the caller vouches that y lies
// within an injectivity radius of x0.
VecN log_map(const ConnectionField& c, const VecN& x0, const VecN& y, double tol,
             int max_iterations = 50, const IntegrationOptions& opts = {});

struct HolonomyResult {
    MatN matrix;
    double defect;  // max-abs entry of matrix - I
    std::vector<std::string> warnings;
};

// Parallel transport of the identity around a closed loop.
HolonomyResult holonomy(const ConnectionField& c, const PathCurve& loop,
                        const IntegrationOptions& opts = {});

}  // namespace nf
