#pragma once

// Symmetric two-state Markov chain on {1,2}: stay with probability theta,
// switch otherwise.  Base measure: counting measure on {1,2}^T.
// Everything is closed form through the stay/switch counts.

#include "helloc/core.hpp"
#include "helloc/divergences.hpp"

#include <cmath>

namespace helloc {

class TwoStateModel final : public ModelSpec {
public:
    TwoStateModel(double mu, int horizon, double rho1_p1 = 0.5)
        : mu_(mu), horizon_(horizon), rho1_p1_(rho1_p1),
          domain_(ParamDomain::box1d(mu, 1.0 - mu)) {
        if (!(mu > 0.0 && mu < 0.5)) throw std::invalid_argument("two_state: mu in (0, 1/2)");
        if (horizon < 2) throw std::invalid_argument("two_state: T >= 2");
        if (!(rho1_p1 > 0.0 && rho1_p1 < 1.0))
            throw std::invalid_argument("two_state: rho1 must put mass on both states");
    }

    std::string id() const override { return "two_state"; }
    int param_dim() const override { return 1; }
    int horizon() const override { return horizon_; }
    const ParamDomain& domain() const override { return domain_; }
    bool log_concave() const override { return true; }
    double mu() const { return mu_; }
    double rho1_p1() const { return rho1_p1_; }

    Trajectory sample(const ParamVector& theta, RngStream& rng) const override {
        check_theta(theta);
        std::vector<int> tok(horizon_);
        tok[0] = rng.bernoulli(rho1_p1_) ? 1 : 2;
        for (int t = 1; t < horizon_; ++t) {
            bool stay = rng.bernoulli(theta[0]);
            tok[t] = stay ? tok[t - 1] : (3 - tok[t - 1]);
        }
        return Trajectory::tokens(std::move(tok));
    }

    static long n_stay(const Trajectory& z) {
        long n = 0;
        for (int t = 1; t < z.horizon(); ++t) n += (z.token(t) == z.token(t - 1));
        return n;
    }

    double loglik(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        long ns = n_stay(z);
        long nw = z.horizon() - 1 - ns;
        double rho = (z.token(0) == 1) ? rho1_p1_ : 1.0 - rho1_p1_;
        return ns * std::log(theta[0]) + nw * std::log(1.0 - theta[0]) + std::log(rho);
    }

    Vector score(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        long ns = n_stay(z);
        long nw = z.horizon() - 1 - ns;
        Vector s(1);
        s[0] = ns / theta[0] - nw / (1.0 - theta[0]);
        return s;
    }

    Matrix hessian(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        long ns = n_stay(z);
        long nw = z.horizon() - 1 - ns;
        Matrix h(1, 1);
        h(0, 0) = -(ns / (theta[0] * theta[0]) + nw / ((1.0 - theta[0]) * (1.0 - theta[0])));
        return h;
    }

    bool has_analytic_fisher() const override { return true; }
    FisherMatrix fisher(const ParamVector& theta) const override {
        check_theta(theta);
        return fisher_two_state(theta[0], horizon_);
    }

    // I(theta) = (T-1)/(theta(1-theta))
    static FisherMatrix fisher_two_state(double theta, int horizon) {
        Matrix m(1, 1);
        m(0, 0) = (horizon - 1) / (theta * (1.0 - theta));
        return FisherMatrix(m, FisherMatrix::Normalization::PerTrajectory);
    }

    bool has_closed_form_hellinger() const override { return rho1_p1_ == 0.5; }
    double hellinger_sq_closed_form(const ParamVector& theta0,
                                    const ParamVector& theta1) const override {
        if (rho1_p1_ != 0.5)
            throw std::logic_error("two_state: tensorization needs the uniform rho1");
        return hellinger_sq_two_state(theta0[0], theta1[0], horizon_).value;
    }

    // I_max over [mu, 1-mu]
    FisherMatrix fisher_max() const {
        Matrix m(1, 1);
        m(0, 0) = (horizon_ - 1) / (mu_ * (1.0 - mu_));
        return FisherMatrix(m, FisherMatrix::Normalization::PerTrajectory);
    }

    struct Moments {
        double score_fourth;    // E[(d l)^4]
        double hessian_second;  // E[(d^2 l)^2]
    };

    static Moments two_state_moments(double theta, int horizon) {
        if (!(theta > 0.0 && theta < 1.0) || horizon < 2)
            throw std::invalid_argument("two_state_moments: bad inputs");
        double t3 = 1.0 / (theta * theta * theta) +
                    1.0 / ((1.0 - theta) * (1.0 - theta) * (1.0 - theta));
        double t22 = 1.0 / (theta * theta * (1.0 - theta) * (1.0 - theta));
        double T1 = horizon - 1.0, T2 = horizon - 2.0;
        Moments m;
        m.score_fourth = T1 * t3 + 3.0 * T1 * T2 * t22;
        m.hessian_second = T1 * t3 + T1 * T2 * t22;
        return m;
    }

private:
    void check_theta(const ParamVector& theta) const {
        if (theta.size() != 1 || !domain_.contains(theta))
            throw std::invalid_argument("two_state: theta outside [mu, 1-mu]");
    }

    double mu_;
    int horizon_;
    double rho1_p1_;
    ParamDomain domain_;
};

}  // namespace helloc
