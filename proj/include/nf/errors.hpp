#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nf {

// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- input / definition errors -------------------------------------------

struct SyntaxError : Error {
    std::size_t offset;  // byte offset into the source text
    SyntaxError(const std::string& msg, std::size_t off)
        : Error(msg + " (at byte " + std::to_string(off) + ")"), offset(off) {}
};

struct UnknownIdentifier : Error {
    std::string name;
    UnknownIdentifier(const std::string& ident, std::size_t off)
        : Error("unknown identifier '" + ident + "' (at byte " + std::to_string(off) + ")"),
          name(ident) {}
};

struct SchemaError : Error {
    std::string path;  // JSON pointer-ish location of the offending field
    SchemaError(const std::string& where, const std::string& msg)
        : Error("schema error at " + where + ": " + msg), path(where) {}
};

// ---- evaluation errors ----------------------------------------------------

// Undefined or non-finite evaluation (log of non-positive, division by zero,
// point outside the chart domain, ...).
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

struct SingularMetric : Error {
    std::vector<double> point;
    SingularMetric(std::vector<double> x, const std::string& msg)
        : Error("singular metric: " + msg), point(std::move(x)) {}
};

struct SingularFrame : Error {
    std::vector<double> point;
    SingularFrame(std::vector<double> x, const std::string& msg)
        : Error("singular frame: " + msg), point(std::move(x)) {}
};

struct SingularGenerator : Error {
    double t;
    explicit SingularGenerator(double t_)
        : Error("transport generator singular at t = " + std::to_string(t_)), t(t_) {}
};

// ---- integration errors ---------------------------------------------------

struct DomainExit : Error {
    double t;
    explicit DomainExit(double t_, const std::string& what = "path left the chart domain")
        : Error(what + " at t = " + std::to_string(t_)), t(t_) {}
};

struct NonFinite : Error {
    double t;
    explicit NonFinite(double t_)
        : Error("state became non-finite at t = " + std::to_string(t_)), t(t_) {}
};

struct NotALoop : Error {
    explicit NotALoop(double gap)
        : Error("path endpoints do not coincide (gap " + std::to_string(gap) + ")") {}
};

struct OutOfRange : Error {
    explicit OutOfRange(const std::string& msg) : Error(msg) {}
};

struct NoConvergence : Error {
    double residual;
    explicit NoConvergence(double res, const std::string& what = "iteration did not converge")
        : Error(what + " (residual " + std::to_string(res) + ")"), residual(res) {}
};

// ---- obstructions ---------------------------------------------------------
// Obstructions are expected negative outcomes of existence questions, not
// failures; the CLI reports them as results with exit code 3.

struct Obstruction : Error {
    explicit Obstruction(const std::string& msg) : Error(msg) {}
};

struct TorsionObstruction : Obstruction {
    std::vector<double> point;
    double torsion_norm;
    std::string hint;
    TorsionObstruction(std::vector<double> x, double norm)
        : Obstruction("nonzero torsion (|T| = " + std::to_string(norm) +
                      ") obstructs normal coordinates; a normal frame still exists"),
          point(std::move(x)), torsion_norm(norm),
          hint("normal frames do not require vanishing torsion") {}
};

struct CurvatureObstruction : Obstruction {
    std::vector<double> point;
    double curvature_norm;
    CurvatureObstruction(std::vector<double> x, double norm)
        : Obstruction("nonzero curvature (|R| = " + std::to_string(norm) +
                      ") obstructs normal frames on this set"),
          point(std::move(x)), curvature_norm(norm) {}
};

struct HolonomyObstruction : Obstruction {
    std::string loop_desc;
    double defect;
    HolonomyObstruction(std::string loop, double d)
        : Obstruction("parallel transport is path-dependent on this patch (loop " + loop +
                      " has defect " + std::to_string(d) + ")"),
          loop_desc(std::move(loop)), defect(d) {}
};

}  // namespace nf
