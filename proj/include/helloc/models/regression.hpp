#pragma once

// Dependent regression z_{t+1} = M(z_t) theta + w_t with product noise
// exp(-phi)/Z per coordinate.  Base measure: Lebesgue on (R^d)^T.  The
// initial state is a pure noise vector (the z_0 = 0 convention), so its
// density is theta-independent.
//
// Built-in feature maps: "lds" M(z) = z^T kron I_d and the bounded
// "bounded_sin" M(z) = sin(z)^T kron I_d, both with p = d^2.

#include "helloc/core.hpp"
#include "helloc/models/noise.hpp"

#include <cmath>
#include <functional>
#include <utility>

namespace helloc {

using FeatureMap = std::function<Matrix(const Vector&)>;

class RegressionModel final : public ModelSpec {
public:
    RegressionModel(std::string id, FeatureMap feature_map, int d, int p, int horizon,
                    NoiseFamily noise, double radius, bool convex_phi)
        : id_(std::move(id)), map_(std::move(feature_map)), d_(d), p_(p), horizon_(horizon),
          noise_(std::move(noise)), convex_phi_(convex_phi),
          domain_(ParamDomain::ball(Vector::Zero(p), radius)) {
        if (d < 1 || p < 1 || horizon < 2) throw std::invalid_argument("regression: bad dims");
    }

    static RegressionModel lds(int d, int horizon, NoiseFamily noise, double radius) {
        FeatureMap m = [d](const Vector& z) { return kron_map(z, d); };
        bool convex = noise.kind != "bang_bang";  // log cosh and quadratics are convex
        return RegressionModel("regression_lds", std::move(m), d, d * d, horizon,
                               std::move(noise), radius, convex);
    }

    static RegressionModel bounded_sin(int d, int horizon, NoiseFamily noise, double radius) {
        FeatureMap m = [d](const Vector& z) {
            Vector s = z.array().sin().matrix();
            return kron_map(s, d);
        };
        bool convex = noise.kind != "bang_bang";
        return RegressionModel("regression_sin_features", std::move(m), d, d * d, horizon,
                               std::move(noise), radius, convex);
    }

    std::string id() const override { return id_; }
    int param_dim() const override { return p_; }
    int horizon() const override { return horizon_; }
    int state_dim() const { return d_; }
    const ParamDomain& domain() const override { return domain_; }
    const NoiseFamily& noise() const { return noise_; }
    const FeatureMap& feature_map() const { return map_; }
    bool log_concave() const override { return convex_phi_; }

    Trajectory sample(const ParamVector& theta, RngStream& rng) const override {
        check_theta(theta);
        Trajectory z = Trajectory::reals(horizon_, d_);
        for (int j = 0; j < d_; ++j) z.state(0)[j] = noise_.sampler(rng);
        for (int t = 1; t < horizon_; ++t) {
            Vector mean = map_(z.state(t - 1)) * theta;
            for (int j = 0; j < d_; ++j) z.state(t)[j] = mean[j] + noise_.sampler(rng);
        }
        return z;
    }

    double loglik(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        double acc = 0.0;
        for (int j = 0; j < d_; ++j) acc += noise_.log_density(z.state(0)[j]);
        for (int t = 0; t + 1 < z.horizon(); ++t) {
            Vector w = z.state(t + 1) - map_(z.state(t)) * theta;
            for (int j = 0; j < d_; ++j) acc += noise_.log_density(w[j]);
        }
        return acc;
    }

    Vector score(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        Vector s = Vector::Zero(p_);
        for (int t = 0; t + 1 < z.horizon(); ++t) {
            Matrix m = map_(z.state(t));
            Vector w = z.state(t + 1) - m * theta;
            Vector g(d_);
            for (int j = 0; j < d_; ++j) g[j] = noise_.phi_prime(w[j]);
            s += m.transpose() * g;
        }
        return s;
    }

    Matrix hessian(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        Matrix h = Matrix::Zero(p_, p_);
        for (int t = 0; t + 1 < z.horizon(); ++t) {
            Matrix m = map_(z.state(t));
            Vector w = z.state(t + 1) - m * theta;
            Vector dd(d_);
            for (int j = 0; j < d_; ++j) dd[j] = noise_.phi_double_prime(w[j]);
            h -= m.transpose() * dd.asDiagonal() * m;
        }
        return h;
    }

    // I(theta) = (1/sigma_phi^2) sum_t E[M(z_t)^T M(z_t)], estimated over n
    // sampled trajectories
    FisherMatrix fisher_regression(const ParamVector& theta, int n, const RngStream& base) const {
        if (n < 1000) throw std::invalid_argument("fisher_regression: n >= 1e3 required");
        McMatrixEstimate est = detail::mc_matrix_mean(p_, n, [&](int i) {
            RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
            Trajectory z = sample(theta, rng);
            Matrix acc = Matrix::Zero(p_, p_);
            for (int t = 0; t + 1 < z.horizon(); ++t) {
                Matrix m = map_(z.state(t));
                acc += m.transpose() * m;
            }
            return acc;
        });
        double s2 = noise_.sigma_phi_sq;
        return FisherMatrix(est.mean / s2, FisherMatrix::Normalization::PerTrajectory,
                            est.se / s2);
    }

    struct FeatureMoments {
        double m1 = 0.0;  // (E[(1/(T-1)) sum_t ||M(z_t)||_op^4])^{1/4}
        double m2 = 0.0;  // (E[(1/(T-1)) sum_t ||M(z_t)||_op^8])^{1/8}
    };

    FeatureMoments feature_moments(const ParamVector& theta, int n, const RngStream& base) const {
        std::vector<double> m4(n), m8(n);
        parallel_for(n, [&](std::int64_t i) {
            RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
            Trajectory z = sample(theta, rng);
            double a4 = 0.0, a8 = 0.0;
            for (int t = 0; t + 1 < z.horizon(); ++t) {
                Matrix m = map_(z.state(t));
                Eigen::JacobiSVD<Matrix> svd(m);
                double op = svd.singularValues()[0];
                a4 += std::pow(op, 4);
                a8 += std::pow(op, 8);
            }
            m4[i] = a4 / (z.horizon() - 1);
            m8[i] = a8 / (z.horizon() - 1);
        });
        double s4 = 0.0, s8 = 0.0;
        for (int i = 0; i < n; ++i) {
            s4 += m4[i];
            s8 += m8[i];
        }
        FeatureMoments out;
        out.m1 = std::pow(s4 / n, 0.25);
        out.m2 = std::pow(s8 / n, 0.125);
        return out;
    }

    // x^T kron I_d as a d x d^2 matrix (column-major vec convention)
    static Matrix kron_map(const Vector& x, int d) {
        Matrix m = Matrix::Zero(d, d * static_cast<int>(x.size()));
        for (int j = 0; j < x.size(); ++j)
            m.block(0, j * d, d, d) = x[j] * Matrix::Identity(d, d);
        return m;
    }

private:
    void check_theta(const ParamVector& theta) const {
        if (theta.size() != p_) throw std::invalid_argument("regression: theta dimension");
    }

    std::string id_;
    FeatureMap map_;
    int d_, p_, horizon_;
    NoiseFamily noise_;
    bool convex_phi_;
    ParamDomain domain_;
};

}  // namespace helloc
