#pragma once

// Single-layer linear-attention sequence model over K tokens with
// d-dimensional embeddings.  theta = vec(K Q^T) in R^{d^2}; the classifier
// head C and embeddings E are fixed.  Logits at step t (predicting the token
// at position t+1 from positions 0..t):
//   Phi( (1/t) C G_t mat(theta) e(z_t) ),  G_t = sum_{s<t} e(z_s) e(z_s)^T,
// where Phi pins the K-th logit to zero.  Base measure: counting measure.
// Trajectories store T tokens; the first two are drawn from rho1 (uniform
// over ordered pairs), the remaining T-2 are generated autoregressively.

#include "helloc/core.hpp"

#include <cmath>

namespace helloc {

class AttentionModel final : public ModelSpec {
public:
    AttentionModel(Matrix embeddings, Matrix classifier, int horizon, double radius)
        : e_(std::move(embeddings)), c_(std::move(classifier)), horizon_(horizon),
          k_(static_cast<int>(e_.rows())), d_(static_cast<int>(e_.cols())),
          domain_(ParamDomain::ball(Vector::Zero(d_ * d_), radius)) {
        if (horizon < 3) throw std::invalid_argument("attention: T >= 3 required");
        if (c_.rows() != k_ - 1 || c_.cols() != d_)
            throw std::invalid_argument("attention: classifier must be (K-1) x d");
        if (d_ + 1 > k_)
            throw std::invalid_argument("attention: full column rank requires d + 1 <= K");
        validate_fixed_matrices();
    }

    // deterministic random embeddings/classifier from a seed; rows of E are
    // scaled so the max norm is exactly one, C is scaled to a target operator
    // norm (>= 1)
    static AttentionModel random(int k, int d, int horizon, double radius,
                                 std::uint64_t embed_seed, double c_opnorm = 1.0) {
        if (c_opnorm < 1.0) throw std::invalid_argument("attention: ||C||_op >= 1 required");
        RngStream rng = derive_stream(embed_seed, 0x41747400ULL);
        for (int attempt = 0; attempt < 64; ++attempt) {
            Matrix e(k, d), c(k - 1, d);
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < d; ++j) e(i, j) = rng.normal();
            for (int i = 0; i < k - 1; ++i)
                for (int j = 0; j < d; ++j) c(i, j) = rng.normal();
            double max_norm = 0.0;
            for (int i = 0; i < k; ++i) max_norm = std::max(max_norm, e.row(i).norm());
            e /= max_norm;
            Eigen::JacobiSVD<Matrix> se(e), sc(c);
            if (se.singularValues()[d - 1] < 1e-3 || sc.singularValues()[d - 1] < 1e-3)
                continue;  // nearly rank-deficient draw, take the next one
            c *= c_opnorm / sc.singularValues()[0];
            return AttentionModel(std::move(e), std::move(c), horizon, radius);
        }
        throw std::runtime_error("attention: failed to draw full-rank embeddings");
    }

    std::string id() const override { return "attention"; }
    int param_dim() const override { return d_ * d_; }
    int horizon() const override { return horizon_; }
    int vocab() const { return k_; }
    int embed_dim() const { return d_; }
    const Matrix& embeddings() const { return e_; }
    const Matrix& classifier() const { return c_; }
    const ParamDomain& domain() const override { return domain_; }

    // affine logits minus log-sum-exp terms: concave in theta
    bool log_concave() const override { return true; }

    double classifier_opnorm() const {
        Eigen::JacobiSVD<Matrix> svd(c_);
        return svd.singularValues()[0];
    }

    // guaranteed floor on every next-token probability over the theta-ball
    double min_prob_floor() const {
        return std::exp(-2.0 * domain_.ball_radius() * classifier_opnorm()) / k_;
    }

    // logits for predicting position t+1 given tokens z_0..z_t (1-based ids)
    Vector logits(const ParamVector& theta, const std::vector<int>& context) const {
        const int t = static_cast<int>(context.size()) - 1;
        if (t < 1) throw std::invalid_argument("attention: context needs >= 2 tokens");
        Matrix g = Matrix::Zero(d_, d_);
        for (int s = 0; s < t; ++s) {
            Vector es = e_.row(context[s] - 1).transpose();
            g += es * es.transpose();
        }
        return logits_from_parts(theta, g, t, context[t]);
    }

    // K x d^2 step matrix M_{0:t}; last row identically zero (Phi structure)
    Matrix attention_step_matrix(const std::vector<int>& context) const {
        const int t = static_cast<int>(context.size()) - 1;
        if (t < 1) throw std::invalid_argument("attention: context needs >= 2 tokens");
        Matrix g = Matrix::Zero(d_, d_);
        for (int s = 0; s < t; ++s) {
            Vector es = e_.row(context[s] - 1).transpose();
            g += es * es.transpose();
        }
        Matrix b = Matrix::Zero(k_, d_);
        b.topRows(k_ - 1) = c_ * g / t;  // J C G / t
        Vector q = e_.row(context[t] - 1).transpose();
        // M = q^T kron b
        Matrix m(k_, d_ * d_);
        for (int j = 0; j < d_; ++j) m.block(0, j * d_, k_, d_) = q[j] * b;
        return m;
    }

    static Vector softmax(const Vector& logits) {
        double mx = logits.maxCoeff();
        Vector p = (logits.array() - mx).exp().matrix();
        return p / p.sum();
    }

    Vector next_token_dist(const ParamVector& theta, const std::vector<int>& context) const {
        return softmax(logits(theta, context));
    }

    Trajectory sample(const ParamVector& theta, RngStream& rng) const override {
        check_theta(theta);
        std::vector<int> tok(horizon_);
        tok[0] = 1 + static_cast<int>(rng.uniform_int(k_));
        tok[1] = 1 + static_cast<int>(rng.uniform_int(k_));
        Matrix g = Matrix::Zero(d_, d_);
        for (int t = 1; t + 1 < horizon_; ++t) {
            Vector ep = e_.row(tok[t - 1] - 1).transpose();
            g += ep * ep.transpose();
            Vector p = softmax(logits_from_parts(theta, g, t, tok[t]));
            double u = rng.uniform();
            double acc = 0.0;
            int pick = k_;
            for (int i = 0; i < k_; ++i) {
                acc += p[i];
                if (u < acc) {
                    pick = i + 1;
                    break;
                }
            }
            tok[t + 1] = std::min(pick, k_);
        }
        return Trajectory::tokens(std::move(tok));
    }

    double loglik(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        double acc = -2.0 * std::log(static_cast<double>(k_));  // uniform rho1 on pairs
        Matrix g = Matrix::Zero(d_, d_);
        for (int t = 1; t + 1 < z.horizon(); ++t) {
            Vector ep = e_.row(z.token(t - 1) - 1).transpose();
            g += ep * ep.transpose();
            Vector lg = logits_from_parts(theta, g, t, z.token(t));
            double mx = lg.maxCoeff();
            double lse = mx + std::log((lg.array() - mx).exp().sum());
            acc += lg[z.token(t + 1) - 1] - lse;
        }
        return acc;
    }

    Vector score(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        Matrix sm = Matrix::Zero(d_, d_);
        Matrix g = Matrix::Zero(d_, d_);
        for (int t = 1; t + 1 < z.horizon(); ++t) {
            Vector ep = e_.row(z.token(t - 1) - 1).transpose();
            g += ep * ep.transpose();
            Matrix b = Matrix::Zero(k_, d_);
            b.topRows(k_ - 1) = c_ * g / t;
            Vector q = e_.row(z.token(t) - 1).transpose();
            Vector p = softmax((b * (mat(theta, d_) * q)));
            Vector u = -p;
            u[z.token(t + 1) - 1] += 1.0;
            sm += (b.transpose() * u) * q.transpose();
        }
        return Eigen::Map<const Vector>(sm.data(), d_ * d_);
    }

    Matrix hessian(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        const int p = d_ * d_;
        Matrix h = Matrix::Zero(p, p);
        Matrix g = Matrix::Zero(d_, d_);
        for (int t = 1; t + 1 < z.horizon(); ++t) {
            Vector ep = e_.row(z.token(t - 1) - 1).transpose();
            g += ep * ep.transpose();
            Matrix b = Matrix::Zero(k_, d_);
            b.topRows(k_ - 1) = c_ * g / t;
            Vector q = e_.row(z.token(t) - 1).transpose();
            Vector s = softmax(b * (mat(theta, d_) * q));
            Matrix core = b.transpose() * (s * s.transpose() - Matrix(s.asDiagonal())) * b;
            Matrix qq = q * q.transpose();
            for (int j = 0; j < d_; ++j)
                for (int i2 = 0; i2 < d_; ++i2)
                    h.block(j * d_, i2 * d_, d_, d_) += qq(j, i2) * core;
        }
        return h;
    }

    // conditional Fisher information at a fixed context
    Matrix conditional_fisher(const ParamVector& theta, const std::vector<int>& context) const {
        Matrix m = attention_step_matrix(context);
        Vector s = softmax(logits(theta, context));
        return m.transpose() * (Matrix(s.asDiagonal()) - s * s.transpose()) * m;
    }

    static Matrix mat(const ParamVector& theta, int d) {
        return Eigen::Map<const Matrix>(theta.data(), d, d);
    }

private:
    Vector logits_from_parts(const ParamVector& theta, const Matrix& g, int t, int query_tok) const {
        Vector q = e_.row(query_tok - 1).transpose();
        Vector head = c_ * (g * (mat(theta, d_) * q)) / t;  // (K-1) logits
        Vector lg = Vector::Zero(k_);
        lg.head(k_ - 1) = head;
        return lg;
    }

    void check_theta(const ParamVector& theta) const {
        if (theta.size() != d_ * d_) throw std::invalid_argument("attention: theta dimension");
    }

    void validate_fixed_matrices() const {
        Eigen::JacobiSVD<Matrix> se(e_), sc(c_);
        if (se.singularValues()[d_ - 1] <= 0 || sc.singularValues()[d_ - 1] <= 0)
            throw std::invalid_argument("attention: E and C must be full column rank");
        for (int i = 0; i < k_; ++i)
            if (e_.row(i).norm() > 1.0 + 1e-9)
                throw std::invalid_argument("attention: embedding norms must be <= 1");
        if (sc.singularValues()[0] < 1.0 - 1e-9)
            throw std::invalid_argument("attention: ||C||_op >= 1 required");
    }

    Matrix e_, c_;
    int horizon_, k_, d_;
    ParamDomain domain_;
};

// ---------------------------------------------------------------------------
// Reduced-covariance eigenvalue floor: for a strictly positive probability
// vector p on K atoms, lambda_min(J^T (diag(p) - p p^T) J) >= mu / (4(K-1)),
// mu = min_i p_i.

struct MinEigReducedCov {
    double lambda_min = 0.0;
    double bound = 0.0;
};

inline MinEigReducedCov min_eig_reduced_cov(const Vector& p) {
    const int k = static_cast<int>(p.size());
    if (k < 2) throw std::invalid_argument("min_eig_reduced_cov: K >= 2 required");
    double sum = 0.0, mn = 1.0;
    for (int i = 0; i < k; ++i) {
        if (!(p[i] > 0.0)) throw std::invalid_argument("min_eig_reduced_cov: p must be positive");
        sum += p[i];
        mn = std::min(mn, p[i]);
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("min_eig_reduced_cov: p must sum to one");
    Vector q = p.head(k - 1);
    Matrix a = Matrix(q.asDiagonal()) - q * q.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    MinEigReducedCov out;
    out.lambda_min = es.eigenvalues().minCoeff();
    out.bound = mn / (4.0 * (k - 1));
    if (out.lambda_min < out.bound * (1.0 - 1e-9))
        throw std::runtime_error("min_eig_reduced_cov: eigenvalue floor violated");
    return out;
}

}  // namespace helloc
