#pragma once
#include <array>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <span>
#include <vector>

#include "nf/errors.hpp"

// Dense linear algebra on tiny matrices (chart dimensions are at most 8).
// Everything is a value type with inline storage; inversion and determinants
// use partial-pivoting elimination with a scaled-pivot singularity threshold.

namespace nf {

inline constexpr int kMaxDim = 8;
inline constexpr double kPivotThreshold = 1e-12;

struct VecN {
    int n = 0;
    std::array<double, kMaxDim> a{};

    VecN() = default;
    explicit VecN(int dim) : n(dim) {}
    VecN(std::initializer_list<double> xs) : n(static_cast<int>(xs.size())) {
        int i = 0;
        for (double x : xs) a[i++] = x;
    }
    static VecN from(std::span<const double> xs) {
        VecN v(static_cast<int>(xs.size()));
        for (int i = 0; i < v.n; ++i) v.a[i] = xs[i];
        return v;
    }
    static VecN zero(int dim) { return VecN(dim); }
    static VecN basis(int dim, int k) {
        VecN v(dim);
        v.a[k] = 1.0;
        return v;
    }

    double& operator[](int i) { return a[i]; }
    double operator[](int i) const { return a[i]; }

    std::vector<double> to_vector() const { return {a.begin(), a.begin() + n}; }

    VecN& operator+=(const VecN& o) {
        for (int i = 0; i < n; ++i) a[i] += o.a[i];
        return *this;
    }
    VecN& operator-=(const VecN& o) {
        for (int i = 0; i < n; ++i) a[i] -= o.a[i];
        return *this;
    }
    VecN& operator*=(double s) {
        for (int i = 0; i < n; ++i) a[i] *= s;
        return *this;
    }
    friend VecN operator+(VecN x, const VecN& y) { return x += y; }
    friend VecN operator-(VecN x, const VecN& y) { return x -= y; }
    friend VecN operator*(double s, VecN x) { return x *= s; }
    friend VecN operator*(VecN x, double s) { return x *= s; }

    double norm_inf() const {
        double m = 0;
        for (int i = 0; i < n; ++i) m = std::max(m, std::abs(a[i]));
        return m;
    }
    double norm2() const {
        double s = 0;
        for (int i = 0; i < n; ++i) s += a[i] * a[i];
        return std::sqrt(s);
    }
    bool finite() const {
        for (int i = 0; i < n; ++i)
            if (!std::isfinite(a[i])) return false;
        return true;
    }
};

inline double dot(const VecN& x, const VecN& y) {
    double s = 0;
    for (int i = 0; i < x.n; ++i) s += x.a[i] * y.a[i];
    return s;
}

struct MatN {
    int n = 0;
    std::array<double, kMaxDim * kMaxDim> a{};

    MatN() = default;
    explicit MatN(int dim) : n(dim) {}

    static MatN identity(int dim) {
        MatN m(dim);
        for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }
    static MatN zero(int dim) { return MatN(dim); }

    double& operator()(int i, int j) { return a[i * n + j]; }
    double operator()(int i, int j) const { return a[i * n + j]; }

    MatN& operator+=(const MatN& o) {
        for (int i = 0; i < n * n; ++i) a[i] += o.a[i];
        return *this;
    }
    MatN& operator-=(const MatN& o) {
        for (int i = 0; i < n * n; ++i) a[i] -= o.a[i];
        return *this;
    }
    MatN& operator*=(double s) {
        for (int i = 0; i < n * n; ++i) a[i] *= s;
        return *this;
    }
    friend MatN operator+(MatN x, const MatN& y) { return x += y; }
    friend MatN operator-(MatN x, const MatN& y) { return x -= y; }
    friend MatN operator*(double s, MatN x) { return x *= s; }

    friend MatN operator*(const MatN& x, const MatN& y) {
        MatN r(x.n);
        for (int i = 0; i < x.n; ++i)
            for (int k = 0; k < x.n; ++k) {
                double xik = x(i, k);
                if (xik == 0.0) continue;
                for (int j = 0; j < x.n; ++j) r(i, j) += xik * y(k, j);
            }
        return r;
    }
    friend VecN operator*(const MatN& m, const VecN& v) {
        VecN r(m.n);
        for (int i = 0; i < m.n; ++i) {
            double s = 0;
            for (int j = 0; j < m.n; ++j) s += m(i, j) * v[j];
            r[i] = s;
        }
        return r;
    }

    MatN transposed() const {
        MatN r(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) r(j, i) = (*this)(i, j);
        return r;
    }

    double max_abs() const {
        double m = 0;
        for (int i = 0; i < n * n; ++i) m = std::max(m, std::abs(a[i]));
        return m;
    }
    bool finite() const {
        for (int i = 0; i < n * n; ++i)
            if (!std::isfinite(a[i])) return false;
        return true;
    }
};

inline double max_abs_diff(const MatN& x, const MatN& y) {
    double m = 0;
    for (int i = 0; i < x.n * x.n; ++i) m = std::max(m, std::abs(x.a[i] - y.a[i]));
    return m;
}

// Row-scaled partial-pivoting LU; shared by solve / invert / det.
// Throws Error when a scaled pivot falls below the threshold.
namespace detail {
struct Lu {
    MatN lu;
    std::array<int, kMaxDim> perm{};
    int sign = 1;
};

inline Lu lu_factor(const MatN& m, double threshold = kPivotThreshold) {
    const int n = m.n;
    Lu f;
    f.lu = m;
    std::array<double, kMaxDim> scale{};
    for (int i = 0; i < n; ++i) {
        double mx = 0;
        for (int j = 0; j < n; ++j) mx = std::max(mx, std::abs(m(i, j)));
        if (mx == 0.0) throw Error("matrix has a zero row");
        scale[i] = 1.0 / mx;
        f.perm[i] = i;
    }
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(f.lu(col, col)) * scale[col];
        for (int r = col + 1; r < n; ++r) {
            double cand = std::abs(f.lu(r, col)) * scale[r];
            if (cand > best) {
                best = cand;
                piv = r;
            }
        }
        if (best < threshold) throw Error("matrix numerically singular (scaled pivot below threshold)");
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(f.lu(piv, j), f.lu(col, j));
            std::swap(scale[piv], scale[col]);
            std::swap(f.perm[piv], f.perm[col]);
            f.sign = -f.sign;
        }
        double inv_piv = 1.0 / f.lu(col, col);
        for (int r = col + 1; r < n; ++r) {
            double factor = f.lu(r, col) * inv_piv;
            f.lu(r, col) = factor;
            for (int j = col + 1; j < n; ++j) f.lu(r, j) -= factor * f.lu(col, j);
        }
    }
    return f;
}

inline VecN lu_solve(const Lu& f, const VecN& b) {
    const int n = f.lu.n;
    VecN y(n);
    for (int i = 0; i < n; ++i) {
        double s = b[f.perm[i]];
        for (int j = 0; j < i; ++j) s -= f.lu(i, j) * y[j];
        y[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int j = i + 1; j < n; ++j) s -= f.lu(i, j) * y[j];
        y[i] = s / f.lu(i, i);
    }
    return y;
}
}  // namespace detail

inline VecN solve(const MatN& m, const VecN& b, double threshold = kPivotThreshold) {
    return detail::lu_solve(detail::lu_factor(m, threshold), b);
}

inline MatN inverse(const MatN& m, double threshold = kPivotThreshold) {
    auto f = detail::lu_factor(m, threshold);
    MatN inv(m.n);
    for (int col = 0; col < m.n; ++col) {
        VecN x = detail::lu_solve(f, VecN::basis(m.n, col));
        for (int i = 0; i < m.n; ++i) inv(i, col) = x[i];
    }
    return inv;
}

inline double determinant(const MatN& m) {
    detail::Lu f;
    try {
        f = detail::lu_factor(m, 0.0);
    } catch (const Error&) {
        return 0.0;  // zero row
    }
    double d = f.sign;
    for (int i = 0; i < m.n; ++i) d *= f.lu(i, i);
    return d;
}

// Determinant after scaling each row to unit max-norm; the non-degeneracy
// checks compare this against a fixed threshold, independent of units.
inline double scaled_determinant(const MatN& m) {
    MatN s = m;
    for (int i = 0; i < m.n; ++i) {
        double mx = 0;
        for (int j = 0; j < m.n; ++j) mx = std::max(mx, std::abs(m(i, j)));
        if (mx == 0.0) return 0.0;
        for (int j = 0; j < m.n; ++j) s(i, j) /= mx;
    }
    return determinant(s);
}

// Rank-3 array, indices (p, q, r) over a common dimension n.
struct Tensor3N {
    int n = 0;
    std::array<double, kMaxDim * kMaxDim * kMaxDim> a{};

    Tensor3N() = default;
    explicit Tensor3N(int dim) : n(dim) {}

    double& operator()(int p, int q, int r) { return a[(p * n + q) * n + r]; }
    double operator()(int p, int q, int r) const { return a[(p * n + q) * n + r]; }

    void fill(double v) { a.fill(v); }
    double max_abs() const {
        double m = 0;
        for (int i = 0; i < n * n * n; ++i) m = std::max(m, std::abs(a[i]));
        return m;
    }
    bool finite() const {
        for (int i = 0; i < n * n * n; ++i)
            if (!std::isfinite(a[i])) return false;
        return true;
    }
    friend Tensor3N operator-(Tensor3N x, const Tensor3N& y) {
        for (int i = 0; i < x.n * x.n * x.n; ++i) x.a[i] -= y.a[i];
        return x;
    }
};

inline double max_abs_diff(const Tensor3N& x, const Tensor3N& y) {
    double m = 0;
    for (int i = 0; i < x.n * x.n * x.n; ++i) m = std::max(m, std::abs(x.a[i] - y.a[i]));
    return m;
}

// Rank-4 array, indices (p, q, r, s).
struct Tensor4N {
    int n = 0;
    std::array<double, kMaxDim * kMaxDim * kMaxDim * kMaxDim> a{};

    Tensor4N() = default;
    explicit Tensor4N(int dim) : n(dim) {}

    double& operator()(int p, int q, int r, int s) { return a[((p * n + q) * n + r) * n + s]; }
    double operator()(int p, int q, int r, int s) const { return a[((p * n + q) * n + r) * n + s]; }

    double max_abs() const {
        double m = 0;
        for (int i = 0; i < n * n * n * n; ++i) m = std::max(m, std::abs(a[i]));
        return m;
    }
};

}  // namespace nf
