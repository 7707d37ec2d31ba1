#pragma once

// Self-check suites behind the `verify` CLI command, one per module.
// Fast, fixed-seed spot checks of the library invariants; the Catch2 test
// tree carries the full oracle suite.

#include "helloc/config.hpp"
#include "helloc/divergences.hpp"
#include "helloc/estimation.hpp"
#include "helloc/harness.hpp"
#include "helloc/localization.hpp"
#include "helloc/models/attention.hpp"
#include "helloc/models/mixture.hpp"
#include "helloc/models/noise.hpp"
#include "helloc/models/regression.hpp"
#include "helloc/models/sin_glm.hpp"
#include "helloc/models/two_state.hpp"

#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace helloc::verify {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

using Suite = std::vector<Check>;

inline void add(Suite& s, const std::string& name, bool pass, const std::string& detail = {}) {
    s.push_back({name, pass, detail});
}

inline double fd_score_rel_err(const ModelSpec& model, const ParamVector& theta,
                               const Trajectory& z, double h = 1e-5) {
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

inline double fd_hessian_rel_err(const ModelSpec& model, const ParamVector& theta,
                                 const Trajectory& z, double h = 1e-5) {
    Matrix hess = model.hessian(theta, z);
    double worst = 0.0;
    double scale = std::max(1.0, hess.cwiseAbs().maxCoeff());
    for (int i = 0; i < theta.size(); ++i) {
        ParamVector tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        Vector col = (model.score(tp, z) - model.score(tm, z)) / (2.0 * h);
        worst = std::max(worst, (col - hess.col(i)).cwiseAbs().maxCoeff() / scale);
    }
    return worst;
}

// MC E[score score^T] vs -MC E[hessian] vs optional analytic, pairwise 3 SE
inline bool information_identity(const ModelSpec& model, const ParamVector& theta, int n,
                                 std::uint64_t seed, std::string* detail = nullptr) {
    McMatrixEstimate so = score_outer_mc(model, theta, n, derive_stream(seed, 1));
    McMatrixEstimate nh = neg_hessian_mc(model, theta, n, derive_stream(seed, 2));
    auto pair_ok = [](const Matrix& a, const Matrix& sa, const Matrix& b, const Matrix& sb) {
        Matrix tolerance = 3.0 * (sa.cwiseProduct(sa) + sb.cwiseProduct(sb)).cwiseSqrt();
        return ((a - b).cwiseAbs() - tolerance).maxCoeff() <= 0.0;
    };
    bool ok = pair_ok(so.mean, so.se, nh.mean, nh.se);
    if (model.has_analytic_fisher()) {
        Matrix ia = model.fisher(theta).entries();
        Matrix zero = Matrix::Zero(ia.rows(), ia.cols());
        ok = ok && pair_ok(so.mean, so.se, ia, zero) && pair_ok(nh.mean, nh.se, ia, zero);
    }
    if (detail) {
        std::ostringstream os;
        os << "max |S-H| entry " << (so.mean - nh.mean).cwiseAbs().maxCoeff();
        *detail = os.str();
    }
    return ok;
}

// ---------------------------------------------------------------------------

inline Suite verify_core() {
    Suite s;
    {
        TwoStateModel model(0.05, 16);
        Vector th(1);
        th << 0.7;
        TrajectoryDataset a = generate_dataset(model, th, 99, 16);
        TrajectoryDataset b = generate_dataset(model, th, 99, 16);
        add(s, "dataset regeneration bit-exact", a == b);
        int saved = worker_count();
        set_worker_count(1);
        TrajectoryDataset c = generate_dataset(model, th, 99, 16);
        set_worker_count(8);
        TrajectoryDataset d = generate_dataset(model, th, 99, 16);
        set_worker_count(saved);
        add(s, "dataset schedule independence", c == d);
    }
    {
        RngStream a = derive_stream(31337, 0), b = derive_stream(31337, 0),
                  c = derive_stream(31337, 1);
        bool same = true;
        for (int i = 0; i < 1000; ++i) same = same && a.next_u64() == b.next_u64();
        add(s, "derived stream determinism", same);
        add(s, "derived stream distinctness",
            derive_stream(31337, 0).next_u64() != c.next_u64());
    }
    {
        RngStream rng = derive_stream(5, 5);
        bool ok = true;
        int checked = 0;
        for (int i = 0; i < 100; ++i) {
            double a = 10.0 * rng.uniform(), b = 10.0 * rng.uniform(),
                   nu = 10.0 * rng.uniform();
            long long m = sufficient_m(a, b, nu);
            double bm = b * static_cast<double>(m);
            if (m > 0 && bm >= 1.0) {
                ++checked;
                ok = ok && static_cast<double>(m) >= a * std::pow(std::log(bm), nu) - 1e-9;
            }
        }
        add(s, "sufficient_m implication (100 random triples)", ok && checked > 10,
            std::to_string(checked) + " defined cases");
        add(s, "sufficient_m frozen values",
            sufficient_m(0, 5, 1) == 0 && sufficient_m(1, 1, 1) == 2 &&
                sufficient_m(10, 100, 1) == 153);
    }
    return s;
}

inline Suite verify_divergences() {
    Suite s;
    {
        DivergenceEstimate iso =
            hellinger_sq_gaussian(Vector::Zero(2), Matrix::Identity(2, 2), Vector::Unit(2, 0),
                                  Matrix::Identity(2, 2));
        add(s, "gaussian closed form (isotropic shift)",
            std::abs(iso.value - 2.0 * (1.0 - std::exp(-0.125))) < 1e-12);
        Vector m1(1), m2(1);
        m1 << 0.0;
        m2 << 0.0;
        Matrix c1(1, 1), c2(1, 1);
        c1 << 1.0;
        c2 << 4.0;
        DivergenceEstimate var = hellinger_sq_gaussian(m1, c1, m2, c2);
        add(s, "gaussian closed form (variance mismatch)",
            std::abs(var.value - 2.0 * (1.0 - std::sqrt(std::sqrt(4.0)) / std::sqrt(2.5))) <
                1e-12);
    }
    {
        // dominance chain on the two-state family, closed forms only
        TwoStateModel model(0.05, 12);
        FisherFn ff = [&](const ParamVector& th) { return model.fisher(th); };
        RngStream rng = derive_stream(21, 0);
        bool ok = true;
        for (int i = 0; i < 200; ++i) {
            Vector a(1), b(1);
            a[0] = 0.05 + 0.9 * rng.uniform();
            b[0] = 0.05 + 0.9 * rng.uniform();
            double h2 = hellinger_sq_two_state(a[0], b[0], 12).value;
            double dfi = fi_divergence(a, b, ff, 256).value;
            double dmax = max_fi_divergence(a, b, model.fisher_max());
            ok = ok && h2 <= 0.25 * dfi * dfi + 1e-9 && dfi <= dmax + 1e-9;
        }
        add(s, "dominance chain H^2 <= d_FI^2/4 <= d_Imax^2/4 (200 pairs)", ok);
    }
    {
        TwoStateModel model(0.05, 3);
        Vector a(1), b(1);
        a << 0.2;
        b << 0.8;
        DivergenceEstimate mc = hellinger_sq_mc(model, a, b, 40000, derive_stream(77, 0));
        double closed = hellinger_sq_two_state(0.2, 0.8, 3).value;
        add(s, "MC estimator matches tensorized closed form",
            std::abs(mc.value - closed) <= 3.0 * mc.std_error,
            "mc " + std::to_string(mc.value) + " closed " + std::to_string(closed));
        add(s, "TV lower bound sqrt(H^2)+3se >= |d theta|",
            std::sqrt(std::max(0.0, mc.value + 3.0 * mc.std_error)) >= 0.6);
    }
    {
        FisherFn quad = [](const ParamVector& th) {
            Matrix m(1, 1);
            m << 3.0 + th[0] * th[0];
            return FisherMatrix(m, FisherMatrix::Normalization::PerTrajectory);
        };
        Vector a(1), b(1);
        a << -0.7;
        b << 1.3;
        double d64 = fi_divergence(a, b, quad, 64).value;
        double d4096 = fi_divergence(a, b, quad, 4096).value;
        add(s, "quadrature convergence 64 vs 4096", std::abs(d64 - d4096) <= 1e-6 * d4096);
    }
    {
        add(s, "product amplification identity",
            std::abs(hellinger_product_amplification(std::sqrt(0.4), 1) - 0.4) < 1e-12 &&
                hellinger_product_amplification(0.0, 50) == 0.0);
        double h = 0.1 / std::sqrt(200.0);
        add(s, "product amplification stays below delta^2",
            hellinger_product_amplification(h, 100) <= 0.01);
        add(s, "clamp counter untouched on well-posed inputs",
            hellinger_clamp_count().load() == 0);
    }
    return s;
}

inline Suite verify_models_markov() {
    Suite s;
    {
        TwoStateModel model(0.05, 8);
        Vector th(1);
        th << 0.62;
        add(s, "two-state information identity", information_identity(model, th, 20000, 1001));
        // frozen hand values
        Trajectory z11 = Trajectory::tokens({1, 1});
        add(s, "two-state loglik hand value",
            std::abs(TwoStateModel(0.05, 2).loglik((Vector(1) << 0.3).finished(), z11) -
                     (std::log(0.5) + std::log(0.3))) < 1e-12);
        add(s, "analytic Fisher (0.5, T=101) = 400",
            TwoStateModel::fisher_two_state(0.5, 101).scalar() == 400.0);
        auto mo = TwoStateModel::two_state_moments(0.5, 3);
        add(s, "moment formulas at (0.5, T=3)",
            std::abs(mo.score_fourth - 128.0) < 1e-9 && std::abs(mo.hessian_second - 64.0) < 1e-9);
    }
    {
        MixtureModel model(0.05, 3);
        Vector th(2);
        th << 0.9, 0.1;
        Trajectory z = Trajectory::tokens({1, 1, 1});
        add(s, "posterior weight 81/82",
            std::abs(model.posterior_weight(th, z) - 81.0 / 82.0) < 1e-12);
        add(s, "mixture loglik hand value",
            std::abs(model.loglik(th, z) - std::log(0.205)) < 1e-12);
        Vector sw(2);
        sw << 0.1, 0.9;
        add(s, "mixture loglik permutation invariance",
            std::abs(model.loglik(th, z) - model.loglik(sw, z)) < 1e-12);
        MixtureModel m200(0.05, 60);
        Vector th2(2);
        th2 << 0.75, 0.3;
        add(s, "mixture information identity", information_identity(m200, th2, 20000, 1003));
        auto ident = MixtureModel::mixture_identifiability(th);
        add(s, "identifiability constants Gap^2/44, 13/Gap",
            std::abs(ident.gamma1 - 0.64 / 44.0) < 1e-12 &&
                std::abs(ident.gamma2 - 13.0 / 0.8) < 1e-12);
    }
    return s;
}

inline Suite verify_models_dynamics() {
    Suite s;
    {
        for (auto kind : {NoiseKind::Gaussian, NoiseKind::BangBang, NoiseKind::SmoothedLaplace}) {
            NoiseFamily f = make_noise(kind, kind == NoiseKind::BangBang ? 0.5 : 1.0);
            PhiRegularityReport rep = check_phi_regularity(f);
            add(s, "phi regularity: " + f.kind, rep.all_pass);
        }
        NoiseFamily g = make_noise_gaussian(1.0);
        add(s, "gaussian noise paper constants (1, 105)",
            g.beta1 == 1.0 && g.beta2 == 105.0 && g.sigma_phi_sq == 1.0);
        NoiseFamily broken;
        broken.kind = "linear_phi";
        broken.phi = [](double x) { return x; };
        broken.phi_prime = [](double) { return 1.0; };
        broken.phi_double_prime = [](double) { return 0.0; };
        broken.tail_scale = 1.0;
        PhiRegularityReport rep = check_phi_regularity(broken);
        add(s, "non-integrable phi rejected", !rep.all_pass && !rep.conditions[0].pass);
    }
    {
        RegressionModel lds = RegressionModel::lds(2, 12, make_noise_smoothed_laplace(5.0, 1.0),
                                                   2.0);
        Vector th(4);
        th << 0.5, -0.2, 0.1, 0.4;
        RngStream rng = derive_stream(2024, 0);
        Trajectory z = lds.sample(th, rng);
        add(s, "regression score finite differences", fd_score_rel_err(lds, th, z) < 1e-5);
        add(s, "regression hessian finite differences", fd_hessian_rel_err(lds, th, z) < 1e-5);
        add(s, "regression information identity (laplace)",
            information_identity(lds, th, 12000, 1005));
    }
    {
        SinGlmModel glm(2, 1.0, 10, 2.0);
        Vector th(4);
        th << 0.8, 0.3, -0.4, 0.6;
        RngStream rng = derive_stream(2025, 0);
        Trajectory z = glm.sample(th, rng);
        add(s, "sin GLM score finite differences", fd_score_rel_err(glm, th, z) < 1e-5);
        add(s, "sin GLM hessian finite differences", fd_hessian_rel_err(glm, th, z) < 1e-5);
        AnticoncentrationCheck ac = cos_anticoncentration_check(1.0, 0.0, 0.1, 200000,
                                                                derive_stream(2026, 0));
        add(s, "cos anticoncentration bound holds", ac.holds,
            "p_hat " + std::to_string(ac.p_hat) + " bound " + std::to_string(ac.bound));
    }
    {
        AttentionModel att = AttentionModel::random(5, 2, 10, 1.0, 7);
        Vector zero = Vector::Zero(4);
        Vector p = att.next_token_dist(zero, {1, 2, 3});
        add(s, "attention theta=0 gives uniform", (p.array() - 0.2).abs().maxCoeff() < 1e-15);
        Vector th(4);
        th << 0.3, -0.2, 0.5, 0.1;
        RngStream rng = derive_stream(2027, 0);
        Trajectory z = att.sample(th, rng);
        add(s, "attention score finite differences", fd_score_rel_err(att, th, z) < 1e-5);
        add(s, "attention information identity", information_identity(att, th, 12000, 1006));
        bool floor_ok = true;
        double floor = att.min_prob_floor();
        for (int i = 0; i < 1000; ++i) {
            RngStream r2 = derive_stream(2028, i);
            Trajectory zz = att.sample(th, r2);
            std::vector<int> ctx(zz.token_data().begin(), zz.token_data().begin() + 3);
            floor_ok = floor_ok && att.next_token_dist(th, ctx).minCoeff() >= floor;
        }
        add(s, "attention min-probability floor", floor_ok);
        Vector pvec(3);
        pvec << 1.0 / 3, 1.0 / 3, 1.0 / 3;
        MinEigReducedCov me = min_eig_reduced_cov(pvec);
        add(s, "reduced covariance eigen floor (uniform K=3)",
            std::abs(me.lambda_min - 1.0 / 9.0) < 1e-12 &&
                std::abs(me.bound - 1.0 / 24.0) < 1e-12);
    }
    return s;
}

inline Suite verify_estimation() {
    Suite s;
    TwoStateModel model(0.05, 3);
    {
        CoverSet cover;
        cover.metric = CoverSet::Metric::Euclidean;
        cover.domain = model.domain();
        cover.epsilon = 0.25;
        for (double t : {0.25, 0.5, 0.75}) cover.points.push_back((Vector(1) << t).finished());
        auto one_path = [&](std::vector<int> tok) {
            TrajectoryDataset ds;
            ds.model_id = model.id();
            ds.horizon = 3;
            ds.trajectories.push_back(Trajectory::tokens(std::move(tok)));
            return ds;
        };
        add(s, "discretized argmax z=(1,1,1) -> 0.75",
            mle_discretized(one_path({1, 1, 1}), model, cover).theta_hat[0] == 0.75);
        add(s, "discretized argmax z=(1,2,1) -> 0.25",
            mle_discretized(one_path({1, 2, 1}), model, cover).theta_hat[0] == 0.25);
        add(s, "discretized argmax z=(1,1,2) -> 0.5",
            mle_discretized(one_path({1, 1, 2}), model, cover).theta_hat[0] == 0.5);
        MleResult cont = mle_continuous(one_path({1, 1, 2}), model);
        add(s, "continuous stationary point 0.5", std::abs(cont.theta_hat[0] - 0.5) < 1e-7);
    }
    {
        FisherMatrix imax = model.fisher_max();
        CoverSet cover = build_cover(model.domain(), imax, 0.05);
        RngStream rng = derive_stream(55, 0);
        double worst = 0.0;
        for (int i = 0; i < 10000; ++i) {
            Vector th = model.domain().sample_uniform(rng);
            worst = std::max(worst, cover.nearest_distance(th));
        }
        add(s, "cover audit: 1e4 random draws within epsilon", worst <= 0.05,
            "worst " + std::to_string(worst));
    }
    {
        // all-stay / all-switch boundary projection
        TrajectoryDataset stay;
        stay.model_id = model.id();
        stay.horizon = 3;
        for (int i = 0; i < 4; ++i) stay.trajectories.push_back(Trajectory::tokens({1, 1, 1}));
        add(s, "all-stay data hits the 1-mu boundary",
            std::abs(mle_continuous(stay, model).theta_hat[0] - 0.95) < 1e-9);
    }
    {
        int saved = worker_count();
        MixtureModel mx(0.05, 40);
        Vector th(2);
        th << 0.8, 0.2;
        TrajectoryDataset ds = generate_dataset(mx, th, 4242, 50);
        set_worker_count(1);
        MleResult a = mle_continuous(ds, mx);
        set_worker_count(8);
        MleResult b = mle_continuous(ds, mx);
        set_worker_count(saved);
        add(s, "multi-start determinism across worker counts",
            a.theta_hat == b.theta_hat && a.loglik == b.loglik);
    }
    return s;
}

inline Suite verify_localization() {
    Suite s;
    {
        add(s, "radius predicate arithmetic",
            check_radius(0.04, 1.0, 1.0) && !check_radius(0.05, 1.0, 1.0) &&
                check_radius(0.044, 0.0, 1.0));
        TwoStateModel model(0.05, 2);
        FisherFn ff = [&](const ParamVector& th) { return model.fisher(th); };
        Vector a(1), b(1);
        a << 0.5;
        b << 0.5;
        MomentEstimate b1 =
            estimate_B1(model, a, b, 4, 20000, 3, derive_stream(3111, 0), ff);
        MomentEstimate b2 =
            estimate_B2(model, a, b, 4, 20000, 3, derive_stream(3112, 0), ff);
        add(s, "B1 = 1 at (0.5, 0.5, T=2)", std::abs(b1.value - 1.0) <= 3.0 * b1.std_error + 0.02,
            "b1 " + std::to_string(b1.value));
        add(s, "B2 = 1 at (0.5, 0.5, T=2)", std::abs(b2.value - 1.0) <= 3.0 * b2.std_error + 0.02,
            "b2 " + std::to_string(b2.value));
    }
    {
        FisherFn constant = [](const ParamVector&) {
            Matrix m(1, 1);
            m << 7.0;
            return FisherMatrix(m, FisherMatrix::Normalization::PerTrajectory);
        };
        Vector a(1), b(1);
        a << 0.0;
        b << 1.0;
        add(s, "I2 of constant Fisher equals the constant",
            std::abs(i2_matrix(a, b, constant, 64).scalar() - 7.0) < 1e-10);
        TwoStateModel m2(0.05, 2);
        FisherFn ff = [&](const ParamVector& th) { return m2.fisher(th); };
        Vector t0(1), t1(1);
        t0 << 0.4;
        t1 << 0.6;
        add(s, "I2 two-state (0.4, 0.6, T=2)",
            std::abs(i2_matrix(t0, t1, ff, 256).scalar() - 10.0 * std::log(1.5)) < 1e-8);
        FiRadiusCheck fr = check_fi_radius((Vector(1) << 0.5).finished(),
                                           (Vector(1) << 0.4).finished(), ff, 17);
        add(s, "FI radius (0.5 -> 0.4) = 1/24",
            fr.ok && std::abs(fr.sup_dev - (0.25 / 0.24 - 1.0)) < 1e-9);
        FiRadiusCheck fr2 = check_fi_radius((Vector(1) << 0.5).finished(),
                                            (Vector(1) << 0.1).finished(), ff, 17);
        add(s, "FI radius (0.5 -> 0.1) fails", !fr2.ok);
    }
    {
        TwoStateModel model(0.05, 50);
        FisherFn ff = [&](const ParamVector& th) { return model.fisher(th); };
        Vector a(1), b(1);
        a << 0.5;
        b << 0.6;
        LocalQuadraticCheck c =
            verify_local_quadratic(model, a, b, 4000, derive_stream(3113, 0), ff);
        add(s, "local quadratic ratio in [3/16, 5/16]", c.in_bounds,
            "ratio " + std::to_string(c.ratio));
    }
    return s;
}

inline Suite verify_harness() {
    Suite s;
    {
        std::vector<ExperimentRecord> recs;
        for (int m : {8, 32, 128})
            for (int T : {8, 32, 128}) {
                ExperimentRecord r;
                r.model_id = "synthetic";
                r.m = m;
                r.T = T;
                r.n_reps = 1;
                r.mean_weighted_err = 3.0 / (static_cast<double>(m) * T);
                r.median_weighted_err = r.mean_weighted_err;
                r.mean_sq_err = r.mean_weighted_err;
                recs.push_back(r);
            }
        SlopeFit fit = fit_slope(recs, SlopeFit::Axis::MT);
        add(s, "synthetic 1/(mT) slope = -1", std::abs(fit.slope + 1.0) < 1e-12 &&
                                                  std::abs(fit.r2 - 1.0) < 1e-12);
        std::vector<ExperimentRecord> parsed = parse_csv(format_csv(recs));
        add(s, "CSV round trip", parsed == recs);
        std::string svg = format_svg(recs);
        add(s, "SVG has one circle per record",
            static_cast<int>(recs.size()) ==
                static_cast<int>([&] {
                    int n = 0;
                    std::size_t pos = 0;
                    while ((pos = svg.find("<circle", pos)) != std::string::npos) {
                        ++n;
                        pos += 7;
                    }
                    return n;
                }()));
    }
    {
        ScalingSpec spec;
        spec.make_model = [](int t) { return std::make_unique<TwoStateModel>(0.05, t); };
        spec.theta_star = (Vector(1) << 0.7).finished();
        spec.grid = {{8, 8}};
        spec.n_reps = 4;
        spec.master_seed = 31;
        int saved = worker_count();
        set_worker_count(1);
        std::string csv1 = format_csv(run_scaling(spec).records);
        set_worker_count(8);
        std::string csv8 = format_csv(run_scaling(spec).records);
        set_worker_count(saved);
        add(s, "scaling CSV byte-identical at 1 and 8 workers", csv1 == csv8);
    }
    return s;
}

inline std::map<std::string, std::function<Suite()>> suites() {
    return {
        {"core", verify_core},
        {"divergences", verify_divergences},
        {"models_markov", verify_models_markov},
        {"models_dynamics", verify_models_dynamics},
        {"estimation", verify_estimation},
        {"localization", verify_localization},
        {"harness", verify_harness},
    };
}

}  // namespace helloc::verify
