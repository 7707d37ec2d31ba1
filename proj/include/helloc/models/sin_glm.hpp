#pragma once

// Sinusoidal GLM dynamics z_{t+1} = sin(A z_t) + w_t, w_t ~ N(0, sigma^2 I),
// z_1 ~ N(0, sigma^2 I) (the z_0 = 0 convention).  theta = vec(A), p = d^2.
// Base measure: Lebesgue.  The Hessian keeps the exact curvature term
// sin(Az) (.) (sin(Az) - z'), not a Gauss-Newton approximation.

#include "helloc/core.hpp"

#include <cmath>

namespace helloc {

class SinGlmModel final : public ModelSpec {
public:
    SinGlmModel(int d, double sigma, int horizon, double radius)
        : d_(d), sigma_(sigma), horizon_(horizon),
          domain_(ParamDomain::ball(Vector::Zero(d * d), radius)) {
        if (d < 1 || horizon < 2 || !(sigma > 0.0))
            throw std::invalid_argument("sin_glm: bad parameters");
    }

    std::string id() const override { return "sin_glm"; }
    int param_dim() const override { return d_ * d_; }
    int horizon() const override { return horizon_; }
    int state_dim() const { return d_; }
    double sigma() const { return sigma_; }
    const ParamDomain& domain() const override { return domain_; }
    bool log_concave() const override { return false; }

    static Matrix mat(const ParamVector& theta, int d) {
        return Eigen::Map<const Matrix>(theta.data(), d, d);
    }

    Trajectory sample(const ParamVector& theta, RngStream& rng) const override {
        Matrix a = mat_checked(theta);
        Trajectory z = Trajectory::reals(horizon_, d_);
        z.state(0) = sigma_ * rng.normal_vector(d_);
        for (int t = 1; t < horizon_; ++t) {
            Vector mean = (a * z.state(t - 1)).array().sin().matrix();
            z.state(t) = mean + sigma_ * rng.normal_vector(d_);
        }
        return z;
    }

    double loglik(const ParamVector& theta, const Trajectory& z) const override {
        Matrix a = mat_checked(theta);
        double s2 = sigma_ * sigma_;
        double c = -0.5 * d_ * std::log(2.0 * kPi * s2);
        double acc = c - 0.5 * z.state(0).squaredNorm() / s2;
        for (int t = 0; t + 1 < z.horizon(); ++t) {
            Vector r = z.state(t + 1) - (a * z.state(t)).array().sin().matrix();
            acc += c - 0.5 * r.squaredNorm() / s2;
        }
        return acc;
    }

    Vector score(const ParamVector& theta, const Trajectory& z) const override {
        Matrix a = mat_checked(theta);
        double s2 = sigma_ * sigma_;
        Matrix g = Matrix::Zero(d_, d_);  // accumulates the matrix form of the score
        for (int t = 0; t + 1 < z.horizon(); ++t) {
            Vector u = a * z.state(t);
            Vector r = z.state(t + 1) - u.array().sin().matrix();
            Vector lhs = u.array().cos().matrix().cwiseProduct(r);
            g += lhs * z.state(t).transpose();
        }
        g /= s2;
        return Eigen::Map<const Vector>(g.data(), d_ * d_);
    }

    Matrix hessian(const ParamVector& theta, const Trajectory& z) const override {
        Matrix a = mat_checked(theta);
        double s2 = sigma_ * sigma_;
        int p = d_ * d_;
        Matrix h = Matrix::Zero(p, p);
        for (int t = 0; t + 1 < z.horizon(); ++t) {
            Vector x = z.state(t);
            Vector u = a * x;
            Vector sn = u.array().sin().matrix();
            Vector cs = u.array().cos().matrix();
            Vector r = sn - z.state(t + 1);  // h_theta(z) - z'
            Vector diag = cs.cwiseProduct(cs) - sn.cwiseProduct(r);
            // (x x^T) kron diag(diag)
            Matrix xx = x * x.transpose();
            for (int j = 0; j < d_; ++j)
                for (int i2 = 0; i2 < d_; ++i2)
                    h.block(j * d_, i2 * d_, d_, d_).diagonal() +=
                        xx(j, i2) * diag;
        }
        return -h / s2;
    }

    // MC of I(theta) = (1/sigma^2) sum_t E[(z_t z_t^T) kron diag(cos^2(A z_t))]
    FisherMatrix fisher_sin_glm(const ParamVector& theta, int n, const RngStream& base) const {
        Matrix a = mat_checked(theta);
        int p = d_ * d_;
        McMatrixEstimate est = detail::mc_matrix_mean(p, n, [&](int i) {
            RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
            Trajectory z = sample(theta, rng);
            Matrix acc = Matrix::Zero(p, p);
            for (int t = 0; t + 1 < z.horizon(); ++t) {
                Vector x = z.state(t);
                Vector c = (a * x).array().cos().matrix();
                Vector c2 = c.cwiseProduct(c);
                Matrix xx = x * x.transpose();
                for (int j = 0; j < d_; ++j)
                    for (int i2 = 0; i2 < d_; ++i2)
                        acc.block(j * d_, i2 * d_, d_, d_).diagonal() += xx(j, i2) * c2;
            }
            return acc;
        });
        double s2 = sigma_ * sigma_;
        return FisherMatrix(est.mean / s2, FisherMatrix::Normalization::PerTrajectory,
                            est.se / s2);
    }

    // analytic lambda_max bound T (d + sigma^2) / sigma^2
    double fisher_lambda_max_bound() const {
        return horizon_ * (d_ + sigma_ * sigma_) / (sigma_ * sigma_);
    }

private:
    Matrix mat_checked(const ParamVector& theta) const {
        if (theta.size() != d_ * d_) throw std::invalid_argument("sin_glm: theta dimension");
        return mat(theta, d_);
    }

    int d_;
    double sigma_;
    int horizon_;
    ParamDomain domain_;
};

// ---------------------------------------------------------------------------
// Gaussian anticoncentration probe for |cos(sigma g + a)|.

struct AnticoncentrationCheck {
    double p_hat = 0.0;
    double std_error = 0.0;
    double bound = 0.0;
    bool holds = false;  // p_hat <= bound + 3 se
};

inline AnticoncentrationCheck cos_anticoncentration_check(double sigma, double a, double t, int n,
                                                          const RngStream& base) {
    if (!(t > 0.0 && t < 1.0) || !(sigma > 0.0))
        throw std::invalid_argument("cos_anticoncentration_check: need t in (0,1), sigma > 0");
    std::vector<char> hits(n);
    parallel_for(n, [&](std::int64_t i) {
        RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
        hits[i] = std::abs(std::cos(sigma * rng.normal() + a)) <= t;
    });
    long k = 0;
    for (char h : hits) k += h;
    AnticoncentrationCheck out;
    out.p_hat = static_cast<double>(k) / n;
    out.std_error = std::sqrt(std::max(out.p_hat * (1.0 - out.p_hat), 1.0 / n) / n);
    out.bound = (1.0 + 3.0 * std::sqrt(kPi / 2.0) / sigma) * (1.0 - 2.0 * std::acos(t) / kPi);
    out.holds = out.p_hat <= out.bound + 3.0 * out.std_error;
    return out;
}

// MC probe of E[(sin<u1,z> - sin<u2,z>)^2] against sigma^2 ||u1-u2||^2
struct SinIdentifiabilityProbe {
    double mse = 0.0;
    double ratio = 0.0;  // mse / (sigma^2 ||u1-u2||^2); NaN when u1 == u2
};

inline SinIdentifiabilityProbe sin_identifiability_probe(const Vector& u1, const Vector& u2,
                                                         double sigma, int n,
                                                         const RngStream& base) {
    if (u1.size() != u2.size()) throw std::invalid_argument("sin_identifiability_probe: dims");
    const int d = static_cast<int>(u1.size());
    std::vector<double> vals(n);
    parallel_for(n, [&](std::int64_t i) {
        RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
        Vector z = sigma * rng.normal_vector(d);
        double diff = std::sin(u1.dot(z)) - std::sin(u2.dot(z));
        vals[i] = diff * diff;
    });
    double sum = 0.0;
    for (double v : vals) sum += v;
    SinIdentifiabilityProbe out;
    out.mse = sum / n;
    double denom = sigma * sigma * (u1 - u2).squaredNorm();
    out.ratio = denom > 0.0 ? out.mse / denom : std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace helloc
