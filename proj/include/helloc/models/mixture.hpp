#pragma once

// Even mixture of two symmetric two-state Markov chains.  The latent chain
// index B ~ Bern(1/2) is drawn once per trajectory and never stored in the
// Trajectory; a diagnostic sampling channel exposes it for collapse studies.

#include "helloc/core.hpp"
#include "helloc/models/two_state.hpp"

#include <cmath>

namespace helloc {

struct MixtureIdentifiability {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
};

class MixtureModel final : public ModelSpec {
public:
    MixtureModel(double mu, int horizon, bool canonical_order = true)
        : mu_(mu), horizon_(horizon), canonical_order_(canonical_order),
          component_(mu, horizon), domain_(make_domain(mu)) {
        if (!(mu > 0.0 && mu < 0.5)) throw std::invalid_argument("mixture: mu in (0, 1/2)");
        if (horizon < 2) throw std::invalid_argument("mixture: T >= 2");
    }

    std::string id() const override { return "mixture"; }
    int param_dim() const override { return 2; }
    int horizon() const override { return horizon_; }
    const ParamDomain& domain() const override { return domain_; }
    bool log_concave() const override { return false; }
    double mu() const { return mu_; }
    bool canonical_order() const { return canonical_order_; }

    // derived, recomputed on demand
    static double gap(const ParamVector& theta) { return std::abs(theta[0] - theta[1]); }
    static double sigma_sq(double t) { return t * (1.0 - t); }
    static double sigma_bar_sq(const ParamVector& theta) {
        return std::max(sigma_sq(theta[0]), sigma_sq(theta[1]));
    }
    static double sigma_lower_sq(const ParamVector& theta) {
        return std::min(sigma_sq(theta[0]), sigma_sq(theta[1]));
    }

    struct LatentSample {
        Trajectory trajectory;
        int latent = 0;  // which chain generated it
    };

    LatentSample sample_with_latent(const ParamVector& theta, RngStream& rng) const {
        check_theta(theta);
        LatentSample out;
        out.latent = rng.bernoulli(0.5) ? 0 : 1;
        Vector t1(1);
        t1[0] = theta[out.latent];
        out.trajectory = component_.sample(t1, rng);
        return out;
    }

    Trajectory sample(const ParamVector& theta, RngStream& rng) const override {
        return sample_with_latent(theta, rng).trajectory;
    }

    // log p = logsumexp(l0, l1) - log 2
    double loglik(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        return log_sum_exp(component_loglik(theta[0], z), component_loglik(theta[1], z)) -
               std::log(2.0);
    }

    // posterior P(B=0 | z) via stable sigmoid of the log likelihood ratio
    double posterior_weight(const ParamVector& theta, const Trajectory& z) const {
        check_theta(theta);
        return stable_sigmoid(component_loglik(theta[0], z) - component_loglik(theta[1], z));
    }

    Vector score(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        double w = posterior_weight(theta, z);
        Vector s(2);
        s[0] = w * component_score(theta[0], z);
        s[1] = (1.0 - w) * component_score(theta[1], z);
        return s;
    }

    Matrix hessian(const ParamVector& theta, const Trajectory& z) const override {
        check_theta(theta);
        double w = posterior_weight(theta, z);
        double s0 = component_score(theta[0], z), s1 = component_score(theta[1], z);
        double h0 = component_hessian(theta[0], z), h1 = component_hessian(theta[1], z);
        Matrix h(2, 2);
        h(0, 0) = w * (1.0 - w) * s0 * s0 + w * h0;
        h(1, 1) = w * (1.0 - w) * s1 * s1 + (1.0 - w) * h1;
        h(0, 1) = h(1, 0) = w * (w - 1.0) * s0 * s1;
        return h;
    }

    FisherMatrix fisher_mc(const ParamVector& theta, int n, const RngStream& base) const {
        if (n < 1000) throw std::invalid_argument("fisher_mixture_mc: n >= 1e3 required");
        return helloc::fisher_mc(*this, theta, n, base);
    }

    // Hellinger identifiability constants around theta_star (canonical order)
    static MixtureIdentifiability mixture_identifiability(const ParamVector& theta_star) {
        double g = gap(theta_star);
        if (!(g > 0.0))
            throw std::invalid_argument("mixture_identifiability: Gap = 0 is non-identifiable");
        MixtureIdentifiability out;
        out.gamma1 = g * g / 44.0;
        out.gamma2 = 13.0 / g;
        return out;
    }

    struct CollapseRate {
        double frac0 = 0.0;  // fraction of B=0 trajectories with w >= 1-eps
        double frac1 = 0.0;  // fraction of B=1 trajectories with w <= eps
        long n0 = 0, n1 = 0;
    };

    CollapseRate posterior_collapse_rate(const ParamVector& theta, double epsilon, int n,
                                         const RngStream& base) const {
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw std::invalid_argument("posterior_collapse_rate: eps in (0,1)");
        std::vector<int> latent(n);
        std::vector<char> hit(n);
        parallel_for(n, [&](std::int64_t i) {
            RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
            LatentSample s = sample_with_latent(theta, rng);
            double w = posterior_weight(theta, s.trajectory);
            latent[i] = s.latent;
            hit[i] = s.latent == 0 ? (w >= 1.0 - epsilon) : (w <= epsilon);
        });
        CollapseRate out;
        long k0 = 0, k1 = 0;
        for (int i = 0; i < n; ++i) {
            if (latent[i] == 0) {
                ++out.n0;
                k0 += hit[i];
            } else {
                ++out.n1;
                k1 += hit[i];
            }
        }
        out.frac0 = out.n0 ? static_cast<double>(k0) / out.n0 : 0.0;
        out.frac1 = out.n1 ? static_cast<double>(k1) / out.n1 : 0.0;
        return out;
    }

    struct AlphaMixingWitness {
        std::vector<double> estimate;  // |P(A cap B_k) - P(A) P(B_k)| for k = 1..k_max
        std::vector<double> std_error;
        double asymptote = 0.0;
    };

    // A = {z_{1:2} = (1,1)}, B_k = {z_{2+k:3+k} = (1,1)}; the mixture keeps the
    // dependence alive for all lags whenever theta0 != theta1.
    AlphaMixingWitness alpha_mixing_witness(const ParamVector& theta, int k_max, int n,
                                            const RngStream& base) const {
        check_theta(theta);
        if (k_max < 1 || n < 100)
            throw std::invalid_argument("alpha_mixing_witness: k_max >= 1, n >= 100");
        const int need = 3 + k_max;  // states z_1 .. z_{3+k_max}
        MixtureModel longer(mu_, need, canonical_order_);

        const int n_batches = 64;
        const int per_batch = n / n_batches;
        // per-batch means for [A], [B_k], [A and B_k]
        std::vector<std::vector<double>> pa(n_batches), pb(n_batches), pab(n_batches);
        parallel_for(n_batches, [&](std::int64_t b) {
            RngStream rng = derive_stream(base.master_seed(),
                                          base.stream_id() + 1 + static_cast<std::uint64_t>(b));
            std::vector<double> a(1, 0.0), bk(k_max, 0.0), abk(k_max, 0.0);
            for (int i = 0; i < per_batch; ++i) {
                Trajectory z = longer.sample(theta, rng);
                bool in_a = z.token(0) == 1 && z.token(1) == 1;
                a[0] += in_a;
                for (int k = 1; k <= k_max; ++k) {
                    bool in_b = z.token(k + 1) == 1 && z.token(k + 2) == 1;
                    bk[k - 1] += in_b;
                    abk[k - 1] += (in_a && in_b);
                }
            }
            for (auto& v : a) v /= per_batch;
            for (auto& v : bk) v /= per_batch;
            for (auto& v : abk) v /= per_batch;
            pa[b] = a;
            pb[b] = bk;
            pab[b] = abk;
        });

        AlphaMixingWitness out;
        out.estimate.resize(k_max);
        out.std_error.resize(k_max);
        for (int k = 0; k < k_max; ++k) {
            std::vector<double> per(n_batches);
            for (int b = 0; b < n_batches; ++b) per[b] = pab[b][k] - pa[b][0] * pb[b][k];
            double mean = 0.0;
            for (double v : per) mean += v;
            mean /= n_batches;
            double ss = 0.0;
            for (double v : per) ss += (v - mean) * (v - mean);
            out.estimate[k] = std::abs(mean);
            out.std_error[k] = std::sqrt(ss / (n_batches - 1.0) / n_batches);
        }
        double pa2 = 0.25 * (theta[0] + theta[1]);
        out.asymptote = pa2 * std::abs(theta[0] / (theta[0] + theta[1]) - 0.5) *
                        std::abs(theta[0] - theta[1]) / 2.0;
        return out;
    }

    // canonical order theta_0 >= theta_1 (the wlog of the theory)
    ParamVector canonicalize(const ParamVector& theta) const override {
        if (!canonical_order_ || theta[0] >= theta[1]) return theta;
        Vector out(2);
        out << theta[1], theta[0];
        return out;
    }

    // component (two-state) pieces, exposed for the localization module
    double component_loglik(double t, const Trajectory& z) const {
        long ns = TwoStateModel::n_stay(z);
        long nw = z.horizon() - 1 - ns;
        return ns * std::log(t) + nw * std::log(1.0 - t) + std::log(0.5);
    }
    double component_score(double t, const Trajectory& z) const {
        long ns = TwoStateModel::n_stay(z);
        long nw = z.horizon() - 1 - ns;
        return ns / t - nw / (1.0 - t);
    }
    double component_hessian(double t, const Trajectory& z) const {
        long ns = TwoStateModel::n_stay(z);
        long nw = z.horizon() - 1 - ns;
        return -(ns / (t * t) + nw / ((1.0 - t) * (1.0 - t)));
    }

private:
    static ParamDomain make_domain(double mu) {
        Vector lo(2), hi(2);
        lo << mu, mu;
        hi << 1.0 - mu, 1.0 - mu;
        return ParamDomain::box(lo, hi);
    }
    void check_theta(const ParamVector& theta) const {
        if (theta.size() != 2 || !domain_.contains(theta))
            throw std::invalid_argument("mixture: theta outside [mu, 1-mu]^2");
    }

    double mu_;
    int horizon_;
    bool canonical_order_;
    TwoStateModel component_;
    ParamDomain domain_;
};

}  // namespace helloc
