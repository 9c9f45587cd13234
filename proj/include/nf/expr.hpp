#pragma once
#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nf/errors.hpp"
#include "nf/linalg.hpp"

// Expression parsing and evaluation with exact derivatives to second order.
// Derivatives come from truncated Taylor (jet) arithmetic propagated through
// the expression, not from finite differences or symbolic rewriting.

namespace nf {

// First-order jet: value and gradient with respect to nvars variables.
struct Jet1 {
    int n = 0;
    double v = 0;
    std::array<double, kMaxDim> g{};
};

// Second-order jet. The Hessian is stored as its upper triangle, so symmetry
// holds by construction.
struct JetValue {
    int n = 0;
    double v = 0;
    std::array<double, kMaxDim> g{};
    std::array<double, kMaxDim*(kMaxDim + 1) / 2> h{};

    static int tri_index(int i, int j, int n) {
        if (i > j) std::swap(i, j);
        return i * n - i * (i - 1) / 2 + (j - i);
    }
    double hess(int i, int j) const { return h[tri_index(i, j, n)]; }
    double& hess_ref(int i, int j) { return h[tri_index(i, j, n)]; }
};

enum class FuncId { Sin, Cos, Tan, Sinh, Cosh, Tanh, Exp, Log, Sqrt, Abs };

enum class AstKind : unsigned char { Literal, Var, Add, Sub, Mul, Div, Pow, PowInt, Neg, Func };

struct AstNode {
    AstKind kind;
    FuncId fn = FuncId::Sin;
    int a = -1, b = -1;  // child node indices
    double value = 0;    // Literal payload
    int var = -1;        // Var payload
    int ipow = 0;        // PowInt payload (exponent)
};

class Expression {
  public:
    Expression() = default;

    // Parses source over the given coordinate names. Identifiers found in the
    // constants table are inlined as literals; "pi" is always available.
    static Expression parse(std::string_view source, const std::vector<std::string>& coords,
                            const std::map<std::string, double>& constants = {});

    // Programmatic construction (used by the normal-frame/coordinate builders).
    static Expression literal(double v, int nvars);
    static Expression variable(int index, int nvars);

    friend Expression operator+(const Expression& x, const Expression& y);
    friend Expression operator-(const Expression& x, const Expression& y);
    friend Expression operator*(const Expression& x, const Expression& y);
    Expression operator-() const;

    bool empty() const { return nodes_.empty(); }
    int num_vars() const { return nvars_; }

    double eval(const VecN& x) const;
    Jet1 eval_jet1(const VecN& x) const;
    JetValue eval_jet(const VecN& x) const;

    // Single-variable conveniences for path components.
    double eval1(double t) const { return eval(VecN{t}); }
    void eval1_jet(double t, double& value, double& deriv) const {
        Jet1 j = eval_jet1(VecN{t});
        value = j.v;
        deriv = j.g[0];
    }

    // Renders to text that parses back to an expression with identical values.
    std::string render() const;

    // True when the whole expression is a single literal.
    std::optional<double> as_constant() const;

  private:
    std::vector<AstNode> nodes_;      // postorder; root is the last node
    int nvars_ = 0;
    std::vector<std::string> names_;  // coordinate names for rendering

    friend class Parser;
    void names_assign(const std::vector<std::string>& coords);
    static Expression combine(AstKind op, const Expression& x, const Expression& y);
};

// Parses a matrix of expressions (row-major) with a common variable set.
std::vector<Expression> parse_all(const std::vector<std::string>& sources,
                                  const std::vector<std::string>& coords,
                                  const std::map<std::string, double>& constants = {});

}  // namespace nf
