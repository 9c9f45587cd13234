#pragma once
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nf/geometry.hpp"
#include "nf/path.hpp"
#include "nf/transport.hpp"

// Construction and verification of frames and coordinates in which the
// connection coefficients vanish: at a point, along a path (including Fermi
// coordinates of a geodesic), on open boxes, and on submanifold patches.
// Constructors build the object; verify_* functions measure the transformed
// coefficients independently and return a NormalityReport.

namespace nf {

enum class RegionKind { Point, Path, Grid, Patch };

struct NormalityReport {
    RegionKind region = RegionKind::Point;
    std::string region_desc;
    double sup_norm = 0;     // max over samples and indices of |Gamma'| (path
                             // regions contract with the tangent first)
    double tolerance = 0;
    bool normal = false;     // sup_norm < tolerance
    VecN worst_point;        // chart coordinates of the worst sample
    double worst_param = 0;  // parameter of the worst sample on path regions
    std::string worst_desc;
};

struct Box {
    VecN lo, hi;
};

// ---- coordinate changes -----------------------------------------------------

// A change of coordinates x -> x'. Closed-form changes carry forward
// expressions (exact derivatives through jets); numeric changes carry the
// inverse map x'(new) -> x(old), optionally with an exact Jacobian provider,
// plus an optional forward evaluator. Missing directions fall back to damped
// Newton on the available one.
class CoordinateChange {
  public:
    struct NumericMaps {
        std::function<VecN(const VecN&)> inverse;  // new -> old
        // fills x = inverse(xp) and J(a,i) = d inverse^a / d x'^i
        std::function<void(const VecN&, VecN&, MatN&)> inverse_with_jacobian;
        std::function<VecN(const VecN&)> forward;  // old -> new
        // fills xp = forward(x) and J(i,a) = d x'^i / d x^a
        std::function<void(const VecN&, VecN&, MatN&)> forward_with_jacobian;
    };

    static CoordinateChange from_forward_exprs(Chart chart, std::vector<Expression> forward);
    static CoordinateChange numeric(Chart chart, NumericMaps maps);

    const Chart& chart() const { return chart_; }
    bool forward_expr_backed() const { return !fwd_exprs_.empty(); }
    bool has_numeric_inverse() const { return static_cast<bool>(maps_.inverse_with_jacobian); }
    const std::vector<Expression>& forward_exprs() const { return fwd_exprs_; }

    VecN to_new(const VecN& x) const;
    VecN to_old(const VecN& xp) const;

    // xp = x'(x) and J(i,a) = d x'^i / d x^a; forward providers only.
    void forward_with_jacobian(const VecN& x, VecN& xp, MatN& J) const;
    // x = inverse(xp) and J(a,i) = d x^a / d x'^i; numeric-backed only.
    void inverse_with_jacobian(const VecN& xp, VecN& x, MatN& J) const;

    // Newton starting point for inverting forward expressions.
    void set_anchor_old(const VecN& anchor) { anchor_old_ = anchor; }

  private:
    Chart chart_;
    std::vector<Expression> fwd_exprs_;
    NumericMaps maps_;
    VecN anchor_old_;
};

enum class DerivRoute {
    Jets,              // exact jets / exact variational Jacobians
    FiniteDifference,  // pure central differences of the map values
};

// Connection coefficients expressed in the new coordinates. For
// expression-backed changes `point` is in OLD coordinates; for numeric
// changes it is in NEW coordinates.
Tensor3N christoffels_in_new_coords(const ConnectionField& c, const CoordinateChange& cc,
                                    const VecN& point, DerivRoute route);

// ---- normal at a point ------------------------------------------------------

// Frame A(x) = (I - Gamma(p0).(x - p0)) B, normal at p0 for any connection
// (torsion allowed); B generates the residual family of solutions.
FrameField normal_frame_at_point(const ConnectionField& c, const VecN& p0,
                                 const MatN* B = nullptr);

struct PointCoordsOptions {
    const MatN* linear = nullptr;  // optional invertible post-composition
    // optional extra terms added to the forward map; each must have vanishing
    // value, gradient, and Hessian at p0 (third order or higher)
    std::vector<Expression> perturbations;
};

// Quadratic change x'^i = (x - p0)^i + 1/2 Gamma^i_jk(p0) (x-p0)^j (x-p0)^k,
// normal at p0; requires vanishing torsion at p0 (TorsionObstruction
// otherwise: no coordinates can remove the antisymmetric part).
CoordinateChange normal_coords_at_point(const ConnectionField& c, const VecN& p0,
                                        const PointCoordsOptions& opts = {});

NormalityReport verify_frame_at_point(const ConnectionField& c, const FrameField& frame,
                                      const VecN& p0, double tol);
// `point` follows the christoffels_in_new_coords convention.
NormalityReport verify_coords_at_point(const ConnectionField& c, const CoordinateChange& cc,
                                       const VecN& point, double tol,
                                       DerivRoute route = DerivRoute::Jets);

// ---- Riemannian normal coordinates ------------------------------------------

// Metric-orthonormal basis at p0 (columns), via signature-aware Gram-Schmidt
// of the coordinate basis; gram receives the resulting diagonal of +-1.
MatN orthonormal_frame_at(const MetricField& g, const VecN& p0, VecN* gram = nullptr);

struct RiemannNormalOptions {
    int steps = 256;        // geodesic integration steps
    double newton_tol = 1e-10;
};

struct RiemannNormalChart {
    CoordinateChange change;  // x' = components of log_p0 in the frame
    VecN origin;              // p0
    MatN frame;               // basis columns at p0
    VecN gram;                // diagonal Gram matrix of the frame (+-1)
};

RiemannNormalChart riemann_normal_coords(const ConnectionField& c, const VecN& p0,
                                         const MatN* frame0 = nullptr,
                                         const RiemannNormalOptions& opts = {});

// ---- normal along a path ----------------------------------------------------

struct FrameAlongPath {
    PathCurve path;
    MatrixAlongPath frames;  // A(t) with exact ODE derivatives at the samples
    std::vector<std::string> warnings;
};

// Solves dA/dt = -(Gamma(i,j,k) tangent^j) A with A(a) = A0; the resulting
// frame is normal along the path, unique up to A(t) -> A(t) C.
FrameAlongPath normal_frame_along_path(const ConnectionField& c, const PathCurve& path,
                                       const MatN& A0, const IntegrationOptions& opts = {});

// sup_t |Gamma'(i,j,k) tangent^j| with dA/dt re-measured by 4th-order finite
// differences of the stored samples (independent of the construction ODE).
NormalityReport verify_frame_along_path(const ConnectionField& c, const FrameAlongPath& fap,
                                        double tol, int samples = 100);

// ---- Fermi coordinates ------------------------------------------------------

struct FermiOptions {
    int steps = 256;
    double newton_tol = 1e-10;
    double torsion_tol = 1e-10;
    double geodesic_check_tol = 1e-5;
};

struct FermiChart {
    CoordinateChange change;  // x'^0 = axis parameter, x'^a = transverse components
    PathCurve axis;
    FrameAlongPath frame;
};

// Coordinates (t, xi) -> exp_{gamma(t)}( xi^a e_a(t) ) over the transported
// transverse frame; the connection coefficients vanish on the axis xi = 0.
// Requires a torsionless connection and a geodesic axis.
FermiChart fermi_coords(const ConnectionField& c, const PathCurve& axis,
                        const FrameAlongPath& frame, const FermiOptions& opts = {});

// Frame for the Fermi construction: column 0 is the axis tangent at t_begin,
// the rest complete it to a basis (metric-orthonormal when available).
MatN fermi_axis_frame(const ConnectionField& c, const PathCurve& axis);

// Christoffels of the Fermi chart at (tau, xi); route as in
// christoffels_in_new_coords (numeric backing: point in new coordinates).
NormalityReport verify_fermi_on_axis(const ConnectionField& c, const FermiChart& fermi, double tol,
                                     int samples = 20);

// ---- normal on open sets ----------------------------------------------------

struct OpenSetOptions {
    int grid = 0;             // 0 = dimension-dependent default (11 / 5 / 3)
    double tol = 1e-6;        // normality verdict
    double tol_R = 1e-8;      // flatness threshold on max |R| over the grid
    double tol_T = 1e-10;     // torsion threshold for coordinates
    int steps_per_unit = 200; // transport resolution per unit coordinate length
    int min_steps = 32;
    double fd_step = 1e-3;    // frame-gradient probe displacement
    const MatN* base_frame = nullptr;
};

struct OpenSetFrame {
    FrameField field;  // callable: transport from base along axis-ordered polylines
    Box box;
    VecN base;
    int grid = 0;
    std::vector<VecN> nodes;     // verification grid, row-major
    std::vector<MatN> frames;    // constructed frame at the nodes
};

// Flat connections only: transports a frame from `base` to every grid node
// along axis-ordered polylines; throws CurvatureObstruction when max |R| on
// the grid exceeds tol_R.
OpenSetFrame normal_frame_on_open_set(const ConnectionField& c, const Box& box, const VecN& base,
                                      const OpenSetOptions& opts = {});

NormalityReport verify_frame_on_grid(const ConnectionField& c, const FrameField& frame,
                                     const std::vector<VecN>& nodes, double tol);

struct OpenSetCoords {
    CoordinateChange change;
    OpenSetFrame frame;
    double mixed_partial_defect = 0;  // integrability witness on the grid
};

// Flat and torsionless connections: integrates dx'/ds = A^-1 dx/ds along the
// same polylines, giving coordinates whose frame is the flat frame.
OpenSetCoords normal_coords_on_open_set(const ConnectionField& c, const Box& box, const VecN& base,
                                        const OpenSetOptions& opts = {});

// ---- submanifold patches ----------------------------------------------------

struct PatchSpec {
    Chart ambient;
    Chart param;                 // m-dimensional parameter box (m <= n)
    std::vector<Expression> phi; // n expressions of the m parameters
};

struct PatchOptions {
    int grid = 5;
    double tol = 1e-6;
    double loop_tol = 1e-6;    // holonomy defect threshold for path-independence
    int steps_per_unit = 200;
    int min_steps = 32;
    int loop_steps = 512;
    double fd_step = 1e-3;
};

struct PatchLoopCheck {
    std::string description;
    double defect = 0;
};

struct PatchFrameResult {
    std::vector<VecN> param_nodes;
    std::vector<VecN> ambient_nodes;
    std::vector<MatN> frames;
    std::vector<PatchLoopCheck> loops;
    NormalityReport report;  // sup |Gamma'(i,j,k) V^j| over patch tangents V
};

// Tests path-independence of parallel transport along loops lying in the
// patch (grid-cell rectangles plus full circles on periodic parameter axes);
// on success transports a frame over the patch; otherwise throws
// HolonomyObstruction with the worst loop.
PatchFrameResult submanifold_normality(const ConnectionField& c, const PatchSpec& patch,
                                       const PatchOptions& opts = {});

// Patch-point evaluation phi(u) and tangent columns d phi / d u^a.
VecN patch_point(const PatchSpec& patch, const VecN& u);
void patch_point_and_tangents(const PatchSpec& patch, const VecN& u, VecN& x, MatN& tangents);

int default_grid_for_dim(int n);

}  // namespace nf
