#include "nf/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <type_traits>

namespace nf {

namespace {

// ---- jet arithmetic --------------------------------------------------------
//
// The same evaluation code runs over three scalar types: double (values),
// Jet1 (value + gradient), JetValue (value + gradient + Hessian). Products
// and chain rules are the truncated Taylor rules at order 2:
//   (fg)''_ij = f''_ij g + f'_i g'_j + f'_j g'_i + f g''_ij
//   (f∘u)''_ij = f''(u) u'_i u'_j + f'(u) u''_ij

inline double value_of(double x) { return x; }
inline double value_of(const Jet1& x) { return x.v; }
inline double value_of(const JetValue& x) { return x.v; }

inline double make_var(double, int /*i*/, int /*n*/, double xv) { return xv; }
inline Jet1 make_var(const Jet1&, int i, int n, double xv) {
    Jet1 j;
    j.n = n;
    j.v = xv;
    j.g[i] = 1.0;
    return j;
}
inline JetValue make_var(const JetValue&, int i, int n, double xv) {
    JetValue j;
    j.n = n;
    j.v = xv;
    j.g[i] = 1.0;
    return j;
}

inline double make_const(double, int /*n*/, double c) { return c; }
inline Jet1 make_const(const Jet1&, int n, double c) {
    Jet1 j;
    j.n = n;
    j.v = c;
    return j;
}
inline JetValue make_const(const JetValue&, int n, double c) {
    JetValue j;
    j.n = n;
    j.v = c;
    return j;
}

inline int tri_size(int n) { return n * (n + 1) / 2; }

inline double jadd(double a, double b) { return a + b; }
inline Jet1 jadd(const Jet1& a, const Jet1& b) {
    Jet1 c = a;
    c.v += b.v;
    for (int i = 0; i < a.n; ++i) c.g[i] += b.g[i];
    return c;
}
inline JetValue jadd(const JetValue& a, const JetValue& b) {
    JetValue c = a;
    c.v += b.v;
    for (int i = 0; i < a.n; ++i) c.g[i] += b.g[i];
    for (int i = 0; i < tri_size(a.n); ++i) c.h[i] += b.h[i];
    return c;
}

inline double jsub(double a, double b) { return a - b; }
inline Jet1 jsub(const Jet1& a, const Jet1& b) {
    Jet1 c = a;
    c.v -= b.v;
    for (int i = 0; i < a.n; ++i) c.g[i] -= b.g[i];
    return c;
}
inline JetValue jsub(const JetValue& a, const JetValue& b) {
    JetValue c = a;
    c.v -= b.v;
    for (int i = 0; i < a.n; ++i) c.g[i] -= b.g[i];
    for (int i = 0; i < tri_size(a.n); ++i) c.h[i] -= b.h[i];
    return c;
}

inline double jneg(double a) { return -a; }
inline Jet1 jneg(const Jet1& a) {
    Jet1 c = a;
    c.v = -c.v;
    for (int i = 0; i < a.n; ++i) c.g[i] = -c.g[i];
    return c;
}
inline JetValue jneg(const JetValue& a) {
    JetValue c = a;
    c.v = -c.v;
    for (int i = 0; i < a.n; ++i) c.g[i] = -c.g[i];
    for (int i = 0; i < tri_size(a.n); ++i) c.h[i] = -c.h[i];
    return c;
}

inline double jmul(double a, double b) { return a * b; }
inline Jet1 jmul(const Jet1& a, const Jet1& b) {
    Jet1 c;
    c.n = a.n;
    c.v = a.v * b.v;
    for (int i = 0; i < a.n; ++i) c.g[i] = a.g[i] * b.v + a.v * b.g[i];
    return c;
}
inline JetValue jmul(const JetValue& a, const JetValue& b) {
    JetValue c;
    c.n = a.n;
    c.v = a.v * b.v;
    for (int i = 0; i < a.n; ++i) c.g[i] = a.g[i] * b.v + a.v * b.g[i];
    int k = 0;
    for (int i = 0; i < a.n; ++i)
        for (int j = i; j < a.n; ++j, ++k)
            c.h[k] = a.h[k] * b.v + a.g[i] * b.g[j] + a.g[j] * b.g[i] + a.v * b.h[k];
    return c;
}

// Chain rule for a scalar function with value/first/second derivative at u.
inline double jchain(double /*u*/, double f0, double /*f1*/, double /*f2*/, double) { return f0; }
inline Jet1 jchain(const Jet1& u, double f0, double f1, double /*f2*/, Jet1) {
    Jet1 c;
    c.n = u.n;
    c.v = f0;
    for (int i = 0; i < u.n; ++i) c.g[i] = f1 * u.g[i];
    return c;
}
inline JetValue jchain(const JetValue& u, double f0, double f1, double f2, JetValue) {
    JetValue c;
    c.n = u.n;
    c.v = f0;
    for (int i = 0; i < u.n; ++i) c.g[i] = f1 * u.g[i];
    int k = 0;
    for (int i = 0; i < u.n; ++i)
        for (int j = i; j < u.n; ++j, ++k) c.h[k] = f2 * u.g[i] * u.g[j] + f1 * u.h[k];
    return c;
}

template <class S>
inline S jrecip(const S& u) {
    double uv = value_of(u);
    if (uv == 0.0) throw DomainError("division by zero");
    double r = 1.0 / uv;
    return jchain(u, r, -r * r, 2.0 * r * r * r, S{});
}

template <class S>
inline S jdiv(const S& a, const S& b) {
    return jmul(a, jrecip(b));
}
inline double jdiv(double a, double b) {
    if (b == 0.0) throw DomainError("division by zero");
    return a / b;
}

// Repeated jet multiplication; valid for any base sign, exponents are tiny.
template <class S>
inline S jpow_int(const S& base, int m) {
    if (m == 0) return make_const(S{}, base.n, 1.0);
    if (m < 0) return jrecip(jpow_int(base, -m));
    S out = base;
    for (int i = 1; i < m; ++i) out = jmul(out, base);
    return out;
}
inline double jpow_int(double base, int m) {
    if (m < 0) {
        if (base == 0.0) throw DomainError("division by zero in integer power");
        return 1.0 / jpow_int(base, -m);
    }
    double out = 1.0;
    for (int i = 0; i < m; ++i) out *= base;
    return out;
}

// u^p for a constant non-integer exponent; requires a positive base.
template <class S>
inline S jpow_const(const S& u, double p) {
    double uv = value_of(u);
    if (uv <= 0.0) throw DomainError("power with non-integer exponent requires a positive base");
    double f0 = std::pow(uv, p);
    double f1 = p * std::pow(uv, p - 1.0);
    double f2 = p * (p - 1.0) * std::pow(uv, p - 2.0);
    return jchain(u, f0, f1, f2, S{});
}
inline double jpow_const(double u, double p) {
    if (u <= 0.0) throw DomainError("power with non-integer exponent requires a positive base");
    return std::pow(u, p);
}

template <class S>
inline S jlog(const S& u) {
    double uv = value_of(u);
    if (uv <= 0.0) throw DomainError("log of non-positive value");
    return jchain(u, std::log(uv), 1.0 / uv, -1.0 / (uv * uv), S{});
}
inline double jlog(double u) {
    if (u <= 0.0) throw DomainError("log of non-positive value");
    return std::log(u);
}

template <class S>
inline S jexp(const S& u) {
    double e = std::exp(value_of(u));
    return jchain(u, e, e, e, S{});
}
inline double jexp(double u) { return std::exp(u); }

// General power with a varying exponent: a^w = exp(w log a), a > 0.
template <class S>
inline S jpow_gen(const S& a, const S& w) {
    return jexp(jmul(w, jlog(a)));
}

template <class S>
inline S jfunc(FuncId f, const S& u) {
    double uv = value_of(u);
    switch (f) {
        case FuncId::Sin: return jchain(u, std::sin(uv), std::cos(uv), -std::sin(uv), S{});
        case FuncId::Cos: return jchain(u, std::cos(uv), -std::sin(uv), -std::cos(uv), S{});
        case FuncId::Tan: {
            double t = std::tan(uv);
            double d = 1.0 + t * t;
            return jchain(u, t, d, 2.0 * t * d, S{});
        }
        case FuncId::Sinh: return jchain(u, std::sinh(uv), std::cosh(uv), std::sinh(uv), S{});
        case FuncId::Cosh: return jchain(u, std::cosh(uv), std::sinh(uv), std::cosh(uv), S{});
        case FuncId::Tanh: {
            double t = std::tanh(uv);
            double d = 1.0 - t * t;
            return jchain(u, t, d, -2.0 * t * d, S{});
        }
        case FuncId::Exp: return jexp(u);
        case FuncId::Log: return jlog(u);
        case FuncId::Sqrt: {
            if (uv < 0.0) throw DomainError("sqrt of negative value");
            if constexpr (!std::is_same_v<S, double>) {
                if (uv == 0.0) throw DomainError("sqrt has no derivative at zero");
            }
            double s = std::sqrt(uv);
            if constexpr (std::is_same_v<S, double>) return s;
            return jchain(u, s, 0.5 / s, -0.25 / (s * uv), S{});
        }
        case FuncId::Abs: {
            if constexpr (std::is_same_v<S, double>) return std::abs(uv);
            if (uv == 0.0) throw DomainError("abs has no derivative at zero");
            double sign = uv > 0.0 ? 1.0 : -1.0;
            return jchain(u, std::abs(uv), sign, 0.0, S{});
        }
    }
    throw DomainError("unknown function");
}

constexpr int kMaxEvalStack = 64;

template <class S>
S eval_tape(const std::vector<AstNode>& nodes, int nvars, const VecN& x) {
    std::array<S, kMaxEvalStack> stack;
    int top = 0;
    for (const AstNode& node : nodes) {
        switch (node.kind) {
            case AstKind::Literal: stack[top++] = make_const(S{}, nvars, node.value); break;
            case AstKind::Var: stack[top++] = make_var(S{}, node.var, nvars, x[node.var]); break;
            case AstKind::Neg: stack[top - 1] = jneg(stack[top - 1]); break;
            case AstKind::PowInt: stack[top - 1] = jpow_int(stack[top - 1], node.ipow); break;
            case AstKind::Func: stack[top - 1] = jfunc(node.fn, stack[top - 1]); break;
            case AstKind::Add:
                --top;
                stack[top - 1] = jadd(stack[top - 1], stack[top]);
                break;
            case AstKind::Sub:
                --top;
                stack[top - 1] = jsub(stack[top - 1], stack[top]);
                break;
            case AstKind::Mul:
                --top;
                stack[top - 1] = jmul(stack[top - 1], stack[top]);
                break;
            case AstKind::Div:
                --top;
                stack[top - 1] = jdiv(stack[top - 1], stack[top]);
                break;
            case AstKind::Pow: {
                --top;
                const S& w = stack[top];
                const S& a = stack[top - 1];
                // constant exponent uses the power rule directly
                if (nodes[node.b].kind == AstKind::Literal)
                    stack[top - 1] = jpow_const(a, value_of(w));
                else
                    stack[top - 1] = jpow_gen(a, w);
                break;
            }
        }
        if (!std::isfinite(value_of(stack[top - 1])))
            throw DomainError("non-finite intermediate value in expression evaluation");
    }
    return stack[0];
}

bool all_finite(const Jet1& j) {
    for (int i = 0; i < j.n; ++i)
        if (!std::isfinite(j.g[i])) return false;
    return true;
}
bool all_finite(const JetValue& j) {
    for (int i = 0; i < j.n; ++i)
        if (!std::isfinite(j.g[i])) return false;
    for (int i = 0; i < tri_size(j.n); ++i)
        if (!std::isfinite(j.h[i])) return false;
    return true;
}

// ---- tokenizer / parser ----------------------------------------------------

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
    Tok kind = Tok::End;
    std::size_t offset = 0;
    double number = 0;
    std::string ident;
    Token() = default;
    Token(Tok k, std::size_t off) : kind(k), offset(off) {}
};

struct Lexer {
    std::string_view src;
    std::size_t pos = 0;

    Token next() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
        if (pos >= src.size()) return {Tok::End, pos};
        std::size_t at = pos;
        char c = src[pos];
        switch (c) {
            case '+': ++pos; return {Tok::Plus, at};
            case '-': ++pos; return {Tok::Minus, at};
            case '*': ++pos; return {Tok::Star, at};
            case '/': ++pos; return {Tok::Slash, at};
            case '^': ++pos; return {Tok::Caret, at};
            case '(': ++pos; return {Tok::LParen, at};
            case ')': ++pos; return {Tok::RParen, at};
            default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = src.data() + pos;
            char* end = nullptr;
            double v = std::strtod(begin, &end);
            if (end == begin) throw SyntaxError("malformed number", at);
            pos += static_cast<std::size_t>(end - begin);
            Token t{Tok::Number, at};
            t.number = v;
            return t;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos;
            while (pos < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
                ++pos;
            Token t{Tok::Ident, at};
            t.ident = std::string(src.substr(start, pos - start));
            return t;
        }
        throw SyntaxError(std::string("unexpected character '") + c + "'", at);
    }
};

const std::map<std::string, FuncId>& function_table() {
    static const std::map<std::string, FuncId> table = {
        {"sin", FuncId::Sin},   {"cos", FuncId::Cos},   {"tan", FuncId::Tan},
        {"sinh", FuncId::Sinh}, {"cosh", FuncId::Cosh}, {"tanh", FuncId::Tanh},
        {"exp", FuncId::Exp},   {"log", FuncId::Log},   {"sqrt", FuncId::Sqrt},
        {"abs", FuncId::Abs}};
    return table;
}

}  // namespace

class Parser {
  public:
    Parser(std::string_view src, const std::vector<std::string>& coords,
           const std::map<std::string, double>& constants)
        : lexer_{src}, coords_(coords), constants_(constants) {
        advance();
    }

    Expression run() {
        Expression e;
        e.nvars_ = static_cast<int>(coords_.size());
        root_ = parse_expr(e.nodes_);
        if (cur_.kind != Tok::End) throw SyntaxError("unexpected trailing input", cur_.offset);
        check_stack_depth(e.nodes_);
        return e;
    }

  private:
    Lexer lexer_;
    Token cur_;
    int root_ = -1;
    const std::vector<std::string>& coords_;
    const std::map<std::string, double>& constants_;

    void advance() { cur_ = lexer_.next(); }

    static int push(std::vector<AstNode>& pool, AstNode n) {
        pool.push_back(n);
        return static_cast<int>(pool.size()) - 1;
    }

    static bool is_literal(const std::vector<AstNode>& pool, int i) {
        return pool[i].kind == AstKind::Literal;
    }

    // Builders fold constant subtrees eagerly; folding is skipped when the
    // constant evaluation itself raises a domain error, so those errors
    // surface at evaluation time as specified.
    static int make_unary(std::vector<AstNode>& pool, AstKind kind, FuncId fn, int child) {
        if (is_literal(pool, child)) {
            try {
                double v = pool[child].value;
                double folded = kind == AstKind::Neg ? -v : jfunc(fn, v);
                if (std::isfinite(folded)) {
                    pool[child].value = folded;
                    return child;
                }
            } catch (const DomainError&) {
            }
        }
        AstNode n;
        n.kind = kind;
        n.fn = fn;
        n.a = child;
        return push(pool, n);
    }

    static int make_binary(std::vector<AstNode>& pool, AstKind kind, int a, int b) {
        if (kind == AstKind::Pow && is_literal(pool, b)) {
            double p = pool[b].value;
            if (p == std::rint(p) && std::abs(p) <= 512.0) {
                // integer exponents work for any base, including negative ones
                if (is_literal(pool, a)) {
                    try {
                        double folded = jpow_int(pool[a].value, static_cast<int>(p));
                        if (std::isfinite(folded)) {
                            pool[a].value = folded;
                            pool.pop_back();  // drop the exponent literal
                            return a;
                        }
                    } catch (const DomainError&) {
                    }
                }
                AstNode n;
                n.kind = AstKind::PowInt;
                n.a = a;
                n.ipow = static_cast<int>(p);
                // note: the literal exponent node stays in the pool unused; it
                // is skipped at evaluation by being consumed before PowInt.
                // To keep the tape a strict postorder program we must not leave
                // dangling pushes, so rewrite the literal into the PowInt node.
                pool[b] = n;
                return b;
            }
        }
        if (is_literal(pool, a) && is_literal(pool, b)) {
            try {
                double x = pool[a].value, y = pool[b].value, folded = 0;
                switch (kind) {
                    case AstKind::Add: folded = x + y; break;
                    case AstKind::Sub: folded = x - y; break;
                    case AstKind::Mul: folded = x * y; break;
                    case AstKind::Div: folded = jdiv(x, y); break;
                    case AstKind::Pow: folded = jpow_const(x, y); break;
                    default: break;
                }
                if (std::isfinite(folded)) {
                    pool.pop_back();  // b is the last node pushed
                    pool[a].value = folded;
                    return a;
                }
            } catch (const DomainError&) {
            }
        }
        AstNode n;
        n.kind = kind;
        n.a = a;
        n.b = b;
        return push(pool, n);
    }

    int parse_expr(std::vector<AstNode>& pool) {
        int lhs = parse_term(pool);
        while (cur_.kind == Tok::Plus || cur_.kind == Tok::Minus) {
            AstKind op = cur_.kind == Tok::Plus ? AstKind::Add : AstKind::Sub;
            advance();
            int rhs = parse_term(pool);
            lhs = make_binary(pool, op, lhs, rhs);
        }
        return lhs;
    }

    int parse_term(std::vector<AstNode>& pool) {
        int lhs = parse_unary(pool);
        while (cur_.kind == Tok::Star || cur_.kind == Tok::Slash) {
            AstKind op = cur_.kind == Tok::Star ? AstKind::Mul : AstKind::Div;
            advance();
            int rhs = parse_unary(pool);
            lhs = make_binary(pool, op, lhs, rhs);
        }
        return lhs;
    }

    // '^' binds tighter than unary minus: -r^2 parses as -(r^2).
    int parse_unary(std::vector<AstNode>& pool) {
        if (cur_.kind == Tok::Minus) {
            advance();
            int child = parse_unary(pool);
            return make_unary(pool, AstKind::Neg, FuncId::Sin, child);
        }
        return parse_power(pool);
    }

    int parse_power(std::vector<AstNode>& pool) {
        int base = parse_atom(pool);
        if (cur_.kind == Tok::Caret) {
            advance();
            int exponent = parse_unary(pool);  // right-associative
            return make_binary(pool, AstKind::Pow, base, exponent);
        }
        return base;
    }

    int parse_atom(std::vector<AstNode>& pool) {
        if (cur_.kind == Tok::Number) {
            AstNode n;
            n.kind = AstKind::Literal;
            n.value = cur_.number;
            advance();
            return push(pool, n);
        }
        if (cur_.kind == Tok::LParen) {
            advance();
            int inner = parse_expr(pool);
            expect(Tok::RParen, "expected ')'");
            return inner;
        }
        if (cur_.kind == Tok::Ident) {
            Token tok = cur_;
            advance();
            if (cur_.kind == Tok::LParen) {
                auto fit = function_table().find(tok.ident);
                if (fit == function_table().end()) throw UnknownIdentifier(tok.ident, tok.offset);
                advance();
                int arg = parse_expr(pool);
                expect(Tok::RParen, "expected ')' after function argument");
                return make_unary(pool, AstKind::Func, fit->second, arg);
            }
            for (std::size_t i = 0; i < coords_.size(); ++i) {
                if (coords_[i] == tok.ident) {
                    AstNode n;
                    n.kind = AstKind::Var;
                    n.var = static_cast<int>(i);
                    return push(pool, n);
                }
            }
            if (auto it = constants_.find(tok.ident); it != constants_.end()) {
                AstNode n;
                n.kind = AstKind::Literal;
                n.value = it->second;
                return push(pool, n);
            }
            if (function_table().count(tok.ident))
                throw SyntaxError("expected '(' after function name '" + tok.ident + "'",
                                  tok.offset);
            if (tok.ident == "pi") {
                AstNode n;
                n.kind = AstKind::Literal;
                n.value = 3.14159265358979323846;
                return push(pool, n);
            }
            throw UnknownIdentifier(tok.ident, tok.offset);
        }
        throw SyntaxError("expected a number, name, or '('", cur_.offset);
    }

    void expect(Tok kind, const char* msg) {
        if (cur_.kind != kind) throw SyntaxError(msg, cur_.offset);
        advance();
    }

    static void check_stack_depth(const std::vector<AstNode>& pool) {
        int depth = 0, peak = 0;
        for (const AstNode& n : pool) {
            switch (n.kind) {
                case AstKind::Literal:
                case AstKind::Var: ++depth; break;
                case AstKind::Add:
                case AstKind::Sub:
                case AstKind::Mul:
                case AstKind::Div:
                case AstKind::Pow: --depth; break;
                default: break;  // unary: depth unchanged
            }
            peak = std::max(peak, depth);
        }
        if (peak >= kMaxEvalStack) throw SyntaxError("expression too deeply nested", 0);
    }
};

Expression Expression::parse(std::string_view source, const std::vector<std::string>& coords,
                             const std::map<std::string, double>& constants) {
    if (source.empty()) throw SyntaxError("empty expression", 0);
    Parser p(source, coords, constants);
    Expression e = p.run();
    e.names_assign(coords);
    return e;
}

void Expression::names_assign(const std::vector<std::string>& coords) { names_ = coords; }

Expression Expression::literal(double v, int nvars) {
    Expression e;
    e.nvars_ = nvars;
    AstNode n;
    n.kind = AstKind::Literal;
    n.value = v;
    e.nodes_.push_back(n);
    return e;
}

Expression Expression::variable(int index, int nvars) {
    Expression e;
    e.nvars_ = nvars;
    AstNode n;
    n.kind = AstKind::Var;
    n.var = index;
    e.nodes_.push_back(n);
    return e;
}

Expression Expression::combine(AstKind op, const Expression& x, const Expression& y) {
    Expression e;
    e.nvars_ = std::max(x.nvars_, y.nvars_);
    e.names_ = x.names_.empty() ? y.names_ : x.names_;
    e.nodes_ = x.nodes_;
    int shift = static_cast<int>(e.nodes_.size());
    for (AstNode n : y.nodes_) {
        if (n.a >= 0) n.a += shift;
        if (n.b >= 0) n.b += shift;
        e.nodes_.push_back(n);
    }
    AstNode root;
    root.kind = op;
    root.a = shift - 1;
    root.b = static_cast<int>(e.nodes_.size()) - 1;
    e.nodes_.push_back(root);
    return e;
}

Expression operator+(const Expression& x, const Expression& y) {
    return Expression::combine(AstKind::Add, x, y);
}
Expression operator-(const Expression& x, const Expression& y) {
    return Expression::combine(AstKind::Sub, x, y);
}
Expression operator*(const Expression& x, const Expression& y) {
    return Expression::combine(AstKind::Mul, x, y);
}
Expression Expression::operator-() const {
    Expression e = *this;
    AstNode n;
    n.kind = AstKind::Neg;
    n.a = static_cast<int>(e.nodes_.size()) - 1;
    e.nodes_.push_back(n);
    return e;
}

double Expression::eval(const VecN& x) const { return eval_tape<double>(nodes_, nvars_, x); }

Jet1 Expression::eval_jet1(const VecN& x) const {
    Jet1 j = eval_tape<Jet1>(nodes_, nvars_, x);
    if (!all_finite(j)) throw DomainError("non-finite derivative in expression evaluation");
    return j;
}

JetValue Expression::eval_jet(const VecN& x) const {
    JetValue j = eval_tape<JetValue>(nodes_, nvars_, x);
    if (!all_finite(j)) throw DomainError("non-finite derivative in expression evaluation");
    return j;
}

std::optional<double> Expression::as_constant() const {
    if (nodes_.size() == 1 && nodes_[0].kind == AstKind::Literal) return nodes_[0].value;
    return std::nullopt;
}

namespace {

// precedence levels for rendering: + - (1), * / (2), unary minus (3), ^ (4), atoms (5)
int render_prec(const std::vector<AstNode>& pool, int i) {
    switch (pool[i].kind) {
        case AstKind::Add:
        case AstKind::Sub: return 1;
        case AstKind::Mul:
        case AstKind::Div: return 2;
        case AstKind::Neg: return 3;
        case AstKind::Pow:
        case AstKind::PowInt: return 4;
        case AstKind::Literal: return pool[i].value < 0 ? 3 : 5;
        default: return 5;
    }
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* func_name(FuncId f) {
    switch (f) {
        case FuncId::Sin: return "sin";
        case FuncId::Cos: return "cos";
        case FuncId::Tan: return "tan";
        case FuncId::Sinh: return "sinh";
        case FuncId::Cosh: return "cosh";
        case FuncId::Tanh: return "tanh";
        case FuncId::Exp: return "exp";
        case FuncId::Log: return "log";
        case FuncId::Sqrt: return "sqrt";
        case FuncId::Abs: return "abs";
    }
    return "?";
}

std::string render_node(const std::vector<AstNode>& pool, int i,
                        const std::vector<std::string>& names, int need) {
    const AstNode& n = pool[i];
    std::string out;
    switch (n.kind) {
        case AstKind::Literal: out = fmt_double(n.value); break;
        case AstKind::Var:
            out = n.var < static_cast<int>(names.size()) ? names[n.var]
                                                         : "x" + std::to_string(n.var);
            break;
        case AstKind::Neg: out = "-" + render_node(pool, n.a, names, 3); break;
        case AstKind::Func:
            out = std::string(func_name(n.fn)) + "(" + render_node(pool, n.a, names, 0) + ")";
            break;
        case AstKind::Add:
            out = render_node(pool, n.a, names, 1) + "+" + render_node(pool, n.b, names, 2);
            break;
        case AstKind::Sub:
            out = render_node(pool, n.a, names, 1) + "-" + render_node(pool, n.b, names, 2);
            break;
        case AstKind::Mul:
            out = render_node(pool, n.a, names, 2) + "*" + render_node(pool, n.b, names, 3);
            break;
        case AstKind::Div:
            out = render_node(pool, n.a, names, 2) + "/" + render_node(pool, n.b, names, 3);
            break;
        case AstKind::Pow:
            out = render_node(pool, n.a, names, 5) + "^" + render_node(pool, n.b, names, 4);
            break;
        case AstKind::PowInt:
            out = render_node(pool, n.a, names, 5) + "^" + std::to_string(n.ipow);
            break;
    }
    if (render_prec(pool, i) < need) out = "(" + out + ")";
    return out;
}

}  // namespace

std::string Expression::render() const {
    if (nodes_.empty()) return "0";
    return render_node(nodes_, static_cast<int>(nodes_.size()) - 1, names_, 0);
}

std::vector<Expression> parse_all(const std::vector<std::string>& sources,
                                  const std::vector<std::string>& coords,
                                  const std::map<std::string, double>& constants) {
    std::vector<Expression> out;
    out.reserve(sources.size());
    for (const std::string& s : sources) out.push_back(Expression::parse(s, coords, constants));
    return out;
}

}  // namespace nf
