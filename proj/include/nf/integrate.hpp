#pragma once
#include <array>
#include <cmath>
#include <span>

#include "nf/errors.hpp"

namespace nf {

// Classical fixed-step 4th-order Runge-Kutta on a flat state vector.
// rhs(t, y, dydt) fills the derivative; observe(step, t, y) runs after every
// step (and once at t0 with step 0). State sizes here are tiny (at most a few
// hundred doubles), so everything lives on the stack of the caller.
inline constexpr int kMaxState = 2 * 8 + 2 * 8 * 8;  // position+velocity plus variations

template <class Rhs, class Observer>
void rk4_integrate(Rhs&& rhs, std::span<double> y, double t0, double t1, int steps,
                   Observer&& observe) {
    const int m = static_cast<int>(y.size());
    std::array<double, kMaxState> k1, k2, k3, k4, tmp;
    const double h = (t1 - t0) / steps;
    observe(0, t0, y);
    double t = t0;
    for (int step = 1; step <= steps; ++step) {
        rhs(t, y.data(), k1.data());
        for (int i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(t + 0.5 * h, tmp.data(), k2.data());
        for (int i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        rhs(t + 0.5 * h, tmp.data(), k3.data());
        for (int i = 0; i < m; ++i) tmp[i] = y[i] + h * k3[i];
        rhs(t + h, tmp.data(), k4.data());
        for (int i = 0; i < m; ++i)
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        t = t0 + (t1 - t0) * step / steps;
        observe(step, t, y);
    }
}

template <class Rhs>
void rk4_integrate(Rhs&& rhs, std::span<double> y, double t0, double t1, int steps) {
    rk4_integrate(rhs, y, t0, t1, steps, [](int, double, std::span<double>) {});
}

}  // namespace nf
