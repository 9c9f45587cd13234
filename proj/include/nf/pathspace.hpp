#pragma once
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nf/geometry.hpp"
#include "nf/path.hpp"
#include "nf/transport.hpp"

// Linear transports along paths in a vector bundle of fibre dimension k over
// the chart. A transport is represented by its generator F(t), an invertible
// k x k matrix function along the path, with L_{s->t} = F(t)^-1 F(s); the
// identity and composition axioms then hold by construction. Parallel
// transport of a connection is the special case F(t) = U(t)^-1 with U the
// transported matrix anchored at the path start.

namespace nf {

class TransportLaw {
  public:
    // Generator given as k x k expressions in the path parameter t.
    static TransportLaw from_generator_exprs(PathCurve path, int k,
                                             std::vector<Expression> entries);
    // Fit against the parallel transport of a connection: F(t) = U(t)^-1,
    // anchored at t0 = path start.
    static TransportLaw from_connection(const ConnectionField& c, PathCurve path,
                                        int steps = 1024);

    int fibre_dim() const { return k_; }
    const PathCurve& path() const { return path_; }
    bool expression_backed() const { return !entries_.empty(); }

    // F(t); throws OutOfRange outside the parameter range and
    // SingularGenerator where F is not invertible.
    MatN generator_at(double t) const;
    // L_{s->t} = F(t)^-1 F(s); L_{t->t} is the identity exactly.
    MatN map(double s, double t) const;
    VecN apply(double s, double t, const VecN& u) const;

    // Derivation coefficient Gamma(t) = F(t)^-1 dF/dt; exact jets for
    // expression generators, 4th-order differences for sampled ones.
    MatN derivation_coeff_at(double t) const;

  private:
    PathCurve path_;
    int k_ = 0;
    std::vector<Expression> entries_;      // expression backing (k*k, row-major)
    std::optional<MatrixAlongPath> samples_;  // sampled backing: U(t), F = U^-1
    void check_range(double t) const;
};

// Derivation along the path induced by a transport: D u = du/dt + Gamma(t) u.
struct PathDerivation {
    PathCurve path;
    int k = 0;
    std::function<MatN(double)> coeff;
};

PathDerivation derivation_from_transport(const TransportLaw& law);

// Reconstructs L_{s->t} from a derivation by integrating du/dt = -Gamma u
// (matrix columns); the round trip against law.map(s, t) closes to
// integrator accuracy.
MatN integrate_derivation(const PathDerivation& d, double s, double t, int steps = 1024);

// Frame along the path in which the transport matrix is the identity:
// columns of F(t)^-1. Unconditional; frame(t) * C is normal again for any
// constant invertible C.
std::function<MatN(double)> transport_normal_frame(const TransportLaw& law);

// max over sample (s,t) pairs of | frame(t)^-1 L_{s->t} frame(s) - I |.
double transport_frame_defect(const TransportLaw& law, const std::function<MatN(double)>& frame,
                              int sample_pairs = 50);

// ---- tangent-bundle specifics -------------------------------------------------

// 2-index coefficient of a transport as a function of the point and the
// tangent of the path through it.
using TangentCoeffFn = std::function<MatN(const VecN& x, const VecN& xdot)>;

struct LinearityCheckResult {
    bool linear = false;
    double max_defect = 0;  // worst |coeff(a u + b w) - a coeff(u) - b coeff(w)|
    // 3-index coefficients extracted on basis tangents when linear
    std::optional<ConnectionField> extracted;
};

// Normal frames require the 2-index coefficients to depend linearly on the
// path tangent; checks the identity on sampled points/tangents and extracts
// Gamma(i,j,k) = coeff(x, e_j)(i,k) when it holds.
LinearityCheckResult tangent_transport_linearity_check(const Chart& chart,
                                                       const TangentCoeffFn& coeff,
                                                       const std::vector<VecN>& points,
                                                       unsigned seed = 1, double tol = 1e-9);

// (Hol(eps) - I) / eps^2 for the coordinate square at x0 spanned by the two
// axes; converges to the curvature matrix R(., ., axis_a, axis_b) as eps -> 0.
MatN transport_curvature(const ConnectionField& c, const VecN& x0, int axis_a, int axis_b,
                         double eps, int steps = 512);

// Self-transported path through the 2-index coefficient route: solves
// dv/dt = -coeff(x, v) v, dx/dt = v. For parallel transports this coincides
// with the geodesics of the generating connection.
PathCurve autoparallel(const ConnectionField& c, const VecN& x0, const VecN& v0, double t_max,
                       int steps = 400);

}  // namespace nf
