#pragma once

// Gauss-Legendre rules (arbitrary order, Newton on Legendre polynomials) and
// a doubling integrator for smooth densities on the real line.

#include "helloc/core.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

namespace helloc {

struct QuadRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

// Nodes via Newton iteration from the Chebyshev initial guess; accurate to
// machine precision for n up to several thousand.
inline QuadRule gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1 required");
    QuadRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * pp * pp);
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

// rules are pure functions of n; cache them
inline const QuadRule& cached_gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, QuadRule> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, gauss_legendre(n)).first;
    return it->second;
}

// integral of f over [a, b] with an n-point rule
inline double integrate(const std::function<double(double)>& f, double a, double b, int n) {
    const QuadRule& rule = cached_gauss_legendre(n);
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return acc * half;
}

// matrix-valued integral of F(s) over [0,1] with weight w(s)
inline Matrix integrate_matrix_01(const std::function<Matrix(double)>& F,
                                  const std::function<double(double)>& w, int n) {
    QuadRule rule = gauss_legendre(n);
    Matrix acc;
    for (int i = 0; i < n; ++i) {
        double s = 0.5 + 0.5 * rule.nodes[i];
        Matrix term = F(s) * (w(s) * rule.weights[i] * 0.5);
        if (acc.size() == 0)
            acc = term;
        else
            acc += term;
    }
    return acc;
}

struct LineIntegral {
    double value = 0.0;
    bool converged = false;
    double half_width = 0.0;  // interval actually used
};

// \int_R f dx for f decaying at +-inf: composite GL on [-L, L], doubling L and
// the panel count until the value stabilizes.  Non-convergence (e.g. a
// non-integrable integrand) is reported, not thrown.
inline LineIntegral integrate_line(const std::function<double(double)>& f, double initial_half_width,
                                   double rel_tol = 1e-11, int max_doublings = 14) {
    LineIntegral out;
    double L = std::max(initial_half_width, 1.0);
    int panels = 8;
    const int pts = 48;
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int k = 0; k < max_doublings; ++k) {
        double acc = 0.0, acc_abs = 0.0;
        double h = 2.0 * L / panels;
        for (int j = 0; j < panels; ++j) {
            acc += integrate(f, -L + j * h, -L + (j + 1) * h, pts);
            acc_abs += integrate([&](double x) { return std::abs(f(x)); }, -L + j * h,
                                 -L + (j + 1) * h, pts);
        }
        if (!std::isfinite(acc)) {  // divergent integrand, give up early
            out.value = acc;
            out.half_width = L;
            return out;
        }
        if (std::isfinite(prev)) {
            // scale against the total variation so exactly-cancelling odd
            // integrands still converge
            double denom = std::max({std::abs(acc), 1e-3 * acc_abs, 1e-300});
            if (std::abs(acc - prev) <= rel_tol * denom) {
                out.value = acc;
                out.converged = true;
                out.half_width = L;
                return out;
            }
        }
        prev = acc;
        L *= 2.0;
        panels = std::min(panels * 2, 4096);
    }
    out.value = prev;
    out.half_width = L;
    return out;
}

}  // namespace helloc
