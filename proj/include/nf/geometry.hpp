#pragma once
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "nf/chart.hpp"
#include "nf/expr.hpp"
#include "nf/linalg.hpp"

// Metrics, linear connections, frames, and their pointwise invariants.
//
// Index convention, fixed once and used everywhere:
//   Gamma(i, j, k):  i = output index, j = differentiation slot,
//                    k = transported slot.
//   Curvature R(i, k, j, l) = d_j Gamma(i,l,k) - d_l Gamma(i,j,k)
//                           + Gamma(i,j,a) Gamma(a,l,k) - Gamma(i,l,a) Gamma(a,j,k),
//   antisymmetric in (j, l).
//   Torsion T(i, j, k) = Gamma(i,j,k) - Gamma(i,k,j).

namespace nf {

// Symmetric metric field; components are expressions stored as the upper
// triangle, so symmetry holds by construction.
class MetricField {
  public:
    MetricField(Chart chart, std::vector<Expression> upper_triangle);

    const Chart& chart() const { return chart_; }
    const Expression& component(int i, int j) const;

    MatN value_at(const VecN& x) const;
    // g and dg(m,i,j) = d_m g_ij from first-order jets.
    void with_grad(const VecN& x, MatN& g, Tensor3N& dg) const;
    // adds ddg(m,p;i,j) = d_m d_p g_ij from second-order jets.
    void with_grad2(const VecN& x, MatN& g, Tensor3N& dg, Tensor4N& ddg) const;

    // Inverse metric; throws SingularMetric at degenerate points.
    MatN inverse_at(const VecN& x) const;
    // |det| after row scaling; the non-degeneracy checks compare against 1e-12.
    double scaled_det_at(const VecN& x) const;

  private:
    Chart chart_;
    std::vector<Expression> g_ut_;  // row-major upper triangle, n(n+1)/2 entries
};

// Connection coefficients over a chart: metric-derived (Levi-Civita),
// directly specified as expressions, or backed by a callable (used when
// coefficients are extracted numerically from a transport law).
class ConnectionField {
  public:
    static ConnectionField from_metric(MetricField g);
    static ConnectionField direct(Chart chart, std::vector<Expression> gamma /* n^3, (i,j,k) */);
    static ConnectionField from_callable(Chart chart, std::function<Tensor3N(const VecN&)> fn,
                                         double fd_step = 1e-5);

    const Chart& chart() const { return chart_; }
    bool metric_derived() const { return metric_.has_value(); }
    const MetricField* metric() const { return metric_ ? &*metric_ : nullptr; }

    // Gamma(i,j,k) at x.
    Tensor3N christoffels_at(const VecN& x) const;
    // Gamma and dG(m,i,j,k) = d_m Gamma(i,j,k); exact jets except for the
    // callable backing, which falls back to central differences.
    void christoffels_with_grad(const VecN& x, Tensor3N& gamma, Tensor4N& dgamma) const;

    // T(i,j,k) = Gamma(i,j,k) - Gamma(i,k,j); antisymmetric in (j,k) exactly.
    Tensor3N torsion_at(const VecN& x) const;
    // R(i,k,j,l); see the convention at the top of this header.
    Tensor4N curvature_at(const VecN& x) const;

    double torsion_max_at(const VecN& x) const { return torsion_at(x).max_abs(); }
    double curvature_max_at(const VecN& x) const { return curvature_at(x).max_abs(); }

  private:
    ConnectionField() = default;
    Chart chart_;
    std::optional<MetricField> metric_;
    std::vector<Expression> gamma_;  // direct backing
    std::function<Tensor3N(const VecN&)> fn_;
    double fd_step_ = 1e-5;
};

// Invertible matrix field A(x), meaning a change of frame e'_k = A^a_k e_a.
// Expression-backed frames give exact derivatives through jets; callable
// frames differentiate by central differences unless a gradient callable is
// supplied.
class FrameField {
  public:
    static FrameField from_exprs(Chart chart, std::vector<Expression> entries /* n^2 */);
    static FrameField constant(Chart chart, const MatN& B);
    static FrameField from_callable(Chart chart, std::function<MatN(const VecN&)> value,
                                    std::function<Tensor3N(const VecN&)> grad = {},
                                    double fd_step = 1e-3);

    const Chart& chart() const { return chart_; }
    bool expression_backed() const { return !entries_.empty(); }
    const std::vector<Expression>& entries() const { return entries_; }

    MatN value_at(const VecN& x) const;
    // dA(b,a,k) = d_b A^a_k
    void with_grad(const VecN& x, MatN& A, Tensor3N& dA) const;
    // Throws SingularFrame when A(x) is not invertible.
    MatN inverse_at(const VecN& x) const;

  private:
    FrameField() = default;
    Chart chart_;
    std::vector<Expression> entries_;  // row-major (a,k)
    std::function<MatN(const VecN&)> fn_;
    std::function<Tensor3N(const VecN&)> grad_fn_;
    double fd_step_ = 1e-3;
};

// Levi-Civita connection of g:
//   Gamma(i,j,k) = 1/2 g^{il} (d_j g_lk + d_k g_lj - d_l g_jk)
ConnectionField christoffel_from_metric(MetricField g);

// Connection coefficients in the frame defined by A, evaluated at x:
//   Gamma'(i,j,k) = (A^-1)^i_a ( A^b_j d_b A^a_k + A^b_j A^c_k Gamma(a,b,c) )
Tensor3N transform_connection(const ConnectionField& c, const FrameField& A, const VecN& x);

// Same transformation when A and dA are already known at x.
Tensor3N transform_connection_at(const Tensor3N& gamma, const MatN& A, const Tensor3N& dA);

}  // namespace nf
