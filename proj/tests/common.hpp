#pragma once

// Shared test fixtures: brute-force path enumeration oracles, an independent
// Gaussian location model, finite-difference derivative oracles.  Everything
// here is oracle-side code, kept independent of the library paths it checks.

#include "helloc/core.hpp"
#include "helloc/divergences.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace testutil {

using helloc::Matrix;
using helloc::ParamVector;
using helloc::Vector;

// probability of one token path under the symmetric two-state chain
inline double two_state_path_prob(const std::vector<int>& path, double theta, double rho1_p1) {
    double p = path[0] == 1 ? rho1_p1 : 1.0 - rho1_p1;
    for (std::size_t t = 1; t < path.size(); ++t)
        p *= path[t] == path[t - 1] ? theta : 1.0 - theta;
    return p;
}

inline void for_each_path(int horizon, const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> path(horizon, 1);
    long total = 1L << horizon;
    for (long code = 0; code < total; ++code) {
        for (int t = 0; t < horizon; ++t) path[t] = (code >> t) & 1 ? 2 : 1;
        fn(path);
    }
}

// exhaustive-path squared Hellinger between two two-state chains
inline double enumerate_hellinger_sq_two_state(double theta0, double theta1, int horizon) {
    double acc = 0.0;
    for_each_path(horizon, [&](const std::vector<int>& path) {
        double p = two_state_path_prob(path, theta0, 0.5);
        double q = two_state_path_prob(path, theta1, 0.5);
        double d = std::sqrt(p) - std::sqrt(q);
        acc += d * d;
    });
    return acc;
}

// mixture path probability (even weights, uniform rho1)
inline double mixture_path_prob(const std::vector<int>& path, double t0, double t1) {
    return 0.5 * two_state_path_prob(path, t0, 0.5) + 0.5 * two_state_path_prob(path, t1, 0.5);
}

inline double enumerate_hellinger_sq_mixture(const Vector& a, const Vector& b, int horizon) {
    double acc = 0.0;
    for_each_path(horizon, [&](const std::vector<int>& path) {
        double p = mixture_path_prob(path, a[0], a[1]);
        double q = mixture_path_prob(path, b[0], b[1]);
        double d = std::sqrt(p) - std::sqrt(q);
        acc += d * d;
    });
    return acc;
}

// ---------------------------------------------------------------------------
// d-dimensional Gaussian location family as a two-step trajectory model:
// state 0 is pinned at zero, state 1 ~ N(theta, nu^2 I).  Used as an
// independent cross-check between the MC Hellinger estimator and the
// closed-form Gaussian expression.

class GaussianLocationModel final : public helloc::ModelSpec {
public:
    GaussianLocationModel(int d, double nu)
        : d_(d), nu_(nu), domain_(helloc::ParamDomain::ball(Vector::Zero(d), 10.0)) {}

    std::string id() const override { return "gaussian_location"; }
    int param_dim() const override { return d_; }
    int horizon() const override { return 2; }
    const helloc::ParamDomain& domain() const override { return domain_; }
    bool log_concave() const override { return true; }

    helloc::Trajectory sample(const ParamVector& theta, helloc::RngStream& rng) const override {
        helloc::Trajectory z = helloc::Trajectory::reals(2, d_);
        z.state(1) = theta + nu_ * rng.normal_vector(d_);
        return z;
    }
    double loglik(const ParamVector& theta, const helloc::Trajectory& z) const override {
        double s2 = nu_ * nu_;
        return -0.5 * (z.state(1) - theta).squaredNorm() / s2 -
               0.5 * d_ * std::log(2.0 * helloc::kPi * s2);
    }
    Vector score(const ParamVector& theta, const helloc::Trajectory& z) const override {
        return (z.state(1) - theta) / (nu_ * nu_);
    }
    Matrix hessian(const ParamVector&, const helloc::Trajectory&) const override {
        return -Matrix::Identity(d_, d_) / (nu_ * nu_);
    }
    bool has_analytic_fisher() const override { return true; }
    helloc::FisherMatrix fisher(const ParamVector&) const override {
        return helloc::FisherMatrix(Matrix::Identity(d_, d_) / (nu_ * nu_),
                                    helloc::FisherMatrix::Normalization::PerTrajectory);
    }
    bool has_closed_form_hellinger() const override { return true; }
    double hellinger_sq_closed_form(const ParamVector& a, const ParamVector& b) const override {
        Matrix cov = nu_ * nu_ * Matrix::Identity(d_, d_);
        return helloc::hellinger_sq_gaussian(a, cov, b, cov).value;
    }

private:
    int d_;
    double nu_;
    helloc::ParamDomain domain_;
};

// ---------------------------------------------------------------------------
// Finite-difference oracles built on loglik alone.

inline double fd_score_rel_err(const helloc::ModelSpec& model, const ParamVector& theta,
                               const helloc::Trajectory& z, double h = 1e-5) {
    Vector g = model.score(theta, z);
    double worst = 0.0;
    for (int i = 0; i < theta.size(); ++i) {
        ParamVector tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        double fd = (model.loglik(tp, z) - model.loglik(tm, z)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(g[i])));
    }
    return worst;
}

inline double fd_hessian_rel_err(const helloc::ModelSpec& model, const ParamVector& theta,
                                 const helloc::Trajectory& z, double h = 1e-5) {
    Matrix hess = model.hessian(theta, z);
    double scale = std::max(1.0, hess.cwiseAbs().maxCoeff());
    double worst = 0.0;
    for (int i = 0; i < theta.size(); ++i) {
        ParamVector tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        Vector col = (model.score(tp, z) - model.score(tm, z)) / (2.0 * h);
        worst = std::max(worst, (col - hess.col(i)).cwiseAbs().maxCoeff() / scale);
    }
    return worst;
}

// normalized-exponential Dirichlet(1,...,1) draw
inline Vector dirichlet_uniform(int k, helloc::RngStream& rng) {
    Vector p(k);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        p[i] = -std::log(u);
        sum += p[i];
    }
    return p / sum;
}

// tiny well-formedness check for the emitted SVG: every tag closes, quotes
// balance, one root element
inline bool xml_well_formed(const std::string& text) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    bool seen_root = false;
    while (i < text.size()) {
        if (text[i] != '<') {
            ++i;
            continue;
        }
        std::size_t end = text.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') continue;
        long quotes = std::count(tag.begin(), tag.end(), '"');
        if (quotes % 2 != 0) return false;
        if (tag[0] == '/') {
            std::string name = tag.substr(1);
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
            continue;
        }
        if (tag.back() == '/') continue;  // self-closing
        std::string name = tag.substr(0, tag.find_first_of(" \t"));
        if (stack.empty() && seen_root) return false;
        seen_root = true;
        stack.push_back(name);
    }
    return stack.empty();
}

inline int count_occurrences(const std::string& text, const std::string& needle) {
    int n = 0;
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

}  // namespace testutil
