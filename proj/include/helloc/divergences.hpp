#pragma once

// Hellinger / Fisher-weighted divergences.  Closed forms where available
// (Gaussians, two-state Markov chains via Bhattacharyya tensorization),
// Monte Carlo through the log-likelihood interface elsewhere.
//
// Conventions: squared Hellinger H^2(p,q) = int (sqrt p - sqrt q)^2 dmu,
// so H^2 in [0,2] and H^2 = 2(1 - BC) for Bhattacharyya coefficient BC.

#include "helloc/core.hpp"
#include "helloc/quadrature.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace helloc {

struct DivergenceEstimate {
    enum class Method { ClosedForm, Tensorized, MonteCarlo, Quadrature };

    double value = 0.0;      // H^2, d_FI, or d_Imax depending on producer
    double std_error = 0.0;  // 0 for deterministic methods
    long n_samples = 0;
    Method method = Method::ClosedForm;
};

// counts how often the [0,2] clamp actually fired; well-posed inputs never do
inline std::atomic<long>& hellinger_clamp_count() {
    static std::atomic<long> n{0};
    return n;
}

// ---------------------------------------------------------------------------
// Closed form for multivariate Gaussians.

inline DivergenceEstimate hellinger_sq_gaussian(const Vector& mu1, const Matrix& cov1,
                                                const Vector& mu2, const Matrix& cov2) {
    const int d = static_cast<int>(mu1.size());
    if (mu2.size() != d || cov1.rows() != d || cov2.rows() != d || cov1.cols() != d ||
        cov2.cols() != d)
        throw std::invalid_argument("hellinger_sq_gaussian: dimension mismatch");
    Matrix avg = 0.5 * (cov1 + cov2);
    Eigen::LDLT<Matrix> ldlt(avg);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error("hellinger_sq_gaussian: degenerate average covariance");
    double logdet_avg = 0.0;
    {
        Vector dvec = ldlt.vectorD();
        for (int i = 0; i < d; ++i) {
            if (!(dvec[i] > 0))
                throw std::runtime_error("hellinger_sq_gaussian: degenerate average covariance");
            logdet_avg += std::log(dvec[i]);
        }
    }
    auto logdet_psd = [&](const Matrix& c) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
        double acc = 0.0;
        for (int i = 0; i < d; ++i) {
            double ev = es.eigenvalues()[i];
            if (!(ev > 0)) throw std::runtime_error("hellinger_sq_gaussian: singular covariance");
            acc += std::log(ev);
        }
        return acc;
    };
    Vector dm = mu1 - mu2;
    double quad = dm.dot(ldlt.solve(dm));
    double log_bc = 0.25 * logdet_psd(cov1) + 0.25 * logdet_psd(cov2) - 0.5 * logdet_avg -
                    0.125 * quad;
    DivergenceEstimate out;
    out.value = 2.0 * (1.0 - std::exp(log_bc));
    out.method = DivergenceEstimate::Method::ClosedForm;
    return out;
}

// ---------------------------------------------------------------------------
// Two-state symmetric Markov chain with uniform initial distribution.
//
// One-step Bernoulli Hellinger h^2 = (sqrt(t0)-sqrt(t1))^2 +
// (sqrt(1-t0)-sqrt(1-t1))^2; the path Bhattacharyya coefficient factorizes
// over transitions, BC_T = (1 - h^2/2)^(T-1), giving
// H^2 = 2(1 - (1 - h^2/2)^(T-1)).  This matches exhaustive path enumeration
// exactly.

inline double hellinger_sq_bernoulli(double theta0, double theta1) {
    double a = std::sqrt(theta0) - std::sqrt(theta1);
    double b = std::sqrt(1.0 - theta0) - std::sqrt(1.0 - theta1);
    return a * a + b * b;
}

inline DivergenceEstimate hellinger_sq_two_state(double theta0, double theta1, int horizon) {
    if (!(theta0 > 0.0 && theta0 < 1.0 && theta1 > 0.0 && theta1 < 1.0))
        throw std::invalid_argument("hellinger_sq_two_state: parameters must lie in (0,1)");
    if (horizon < 2) throw std::invalid_argument("hellinger_sq_two_state: T >= 2 required");
    double h2 = hellinger_sq_bernoulli(theta0, theta1);
    double bc = 1.0 - 0.5 * h2;
    DivergenceEstimate out;
    out.value = 2.0 * (1.0 - std::pow(bc, horizon - 1));
    out.method = DivergenceEstimate::Method::Tensorized;
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo estimator via the Bhattacharyya identity
// BC = E_{p0}[ exp( (l1 - l0)/2 ) ], sampling from p_{theta0}.

inline DivergenceEstimate hellinger_sq_mc(const ModelSpec& model, const ParamVector& theta0,
                                          const ParamVector& theta1, int n,
                                          const RngStream& base) {
    if (n < 2) throw std::invalid_argument("hellinger_sq_mc: n >= 2 required");
    std::vector<double> vals(n);
    parallel_for(n, [&](std::int64_t i) {
        RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
        Trajectory z = model.sample(theta0, rng);
        double l0 = model.loglik(theta0, z);
        double l1 = model.loglik(theta1, z);
        if (!std::isfinite(l0) || !std::isfinite(l1)) {
            std::ostringstream msg;
            msg << "hellinger_sq_mc: non-finite log-likelihood on trajectory " << i
                << " of model " << model.id();
            throw std::runtime_error(msg.str());
        }
        vals[i] = std::exp(0.5 * (l1 - l0));
    });
    double sum = 0.0;
    for (double v : vals) sum += v;
    double mean = sum / n;
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / (n - 1.0));

    DivergenceEstimate out;
    out.value = 2.0 * (1.0 - mean);
    out.std_error = 2.0 * sd / std::sqrt(static_cast<double>(n));
    out.n_samples = n;
    out.method = DivergenceEstimate::Method::MonteCarlo;
    if (out.value < 0.0 || out.value > 2.0) {
        hellinger_clamp_count().fetch_add(1);
        out.value = std::min(2.0, std::max(0.0, out.value));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fisher-weighted divergences.

using FisherFn = std::function<FisherMatrix(const ParamVector&)>;

// d_FI(theta0, theta1) = || theta1 - theta0 ||_{ int_0^1 I(theta(s)) ds }
inline DivergenceEstimate fi_divergence(const ParamVector& theta0, const ParamVector& theta1,
                                        const FisherFn& fisher_fn, int n_quad) {
    if (n_quad < 2) throw std::invalid_argument("fi_divergence: n_quad >= 2 required");
    Vector delta = theta1 - theta0;
    DivergenceEstimate out;
    out.method = DivergenceEstimate::Method::Quadrature;
    if (delta.norm() == 0.0) return out;
    Matrix avg = integrate_matrix_01(
        [&](double s) { return fisher_fn(theta0 + s * delta).entries(); },
        [](double) { return 1.0; }, n_quad);
    out.value = std::sqrt(std::max(0.0, delta.dot(avg * delta)));
    return out;
}

inline double max_fi_divergence(const ParamVector& theta0, const ParamVector& theta1,
                                const FisherMatrix& i_max) {
    if (theta0.size() != theta1.size() || i_max.dim() != theta0.size())
        throw std::invalid_argument("max_fi_divergence: dimension mismatch");
    Vector delta = theta1 - theta0;
    return std::sqrt(std::max(0.0, i_max.quad_form(delta)));
}

// H^2 between m-fold products of measures at one-shot Hellinger distance h
inline double hellinger_product_amplification(double h, long m) {
    if (!(h >= 0.0) || h * h > 2.0 + 1e-12)
        throw std::invalid_argument("hellinger_product_amplification: need h^2 <= 2");
    double bc = 1.0 - 0.5 * h * h;
    return 2.0 * (1.0 - std::pow(bc, static_cast<double>(m)));
}

}  // namespace helloc
