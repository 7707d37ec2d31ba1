#include <catch2/catch_amalgamated.hpp>

#include "common.hpp"
#include "helloc/localization.hpp"
#include "helloc/models/attention.hpp"
#include "helloc/models/mixture.hpp"
#include "helloc/models/regression.hpp"
#include "helloc/models/sin_glm.hpp"
#include "helloc/models/two_state.hpp"

using namespace helloc;

namespace {
FisherFn two_state_fisher(const TwoStateModel& model) {
    return [&model](const ParamVector& th) { return model.fisher(th); };
}
Vector scalar(double v) {
    Vector x(1);
    x << v;
    return x;
}
}  // namespace

TEST_CASE("B1/B2 closed-form anchors", "[localization]") {
    SECTION("T = 2 at one half: both equal one") {
        TwoStateModel model(0.05, 2);
        FisherFn ff = two_state_fisher(model);
        MomentEstimate b1 =
            estimate_B1(model, scalar(0.5), scalar(0.5), 4, 40000, 3, derive_stream(151, 0), ff);
        MomentEstimate b2 =
            estimate_B2(model, scalar(0.5), scalar(0.5), 4, 40000, 3, derive_stream(152, 0), ff);
        CHECK(std::abs(b1.value - 1.0) <= 3.0 * b1.std_error + 0.01);
        CHECK(std::abs(b2.value - 1.0) <= 3.0 * b2.std_error + 0.01);
    }
    SECTION("long-horizon limits 3^{1/4} and 1 within 2%") {
        TwoStateModel model(0.05, 500);
        FisherFn ff = two_state_fisher(model);
        MomentEstimate b1 =
            estimate_B1(model, scalar(0.5), scalar(0.5), 2, 30000, 1, derive_stream(153, 0), ff);
        MomentEstimate b2 =
            estimate_B2(model, scalar(0.5), scalar(0.5), 2, 30000, 1, derive_stream(154, 0), ff);
        CHECK(std::abs(b1.value - std::pow(3.0, 0.25)) < 0.02 * std::pow(3.0, 0.25));
        CHECK(std::abs(b2.value - 1.0) < 0.02);
        // analytic values from the closed-form moments
        auto mo = TwoStateModel::two_state_moments(0.5, 500);
        double i = TwoStateModel::fisher_two_state(0.5, 500).scalar();
        CHECK(std::pow(mo.score_fourth / (i * i), 0.25) ==
              Catch::Approx(std::pow(3.0, 0.25)).margin(0.004));
    }
    SECTION("MC matches the closed-form moments at T = 50 within 3 SE") {
        TwoStateModel model(0.05, 50);
        FisherFn ff = two_state_fisher(model);
        MomentEstimate b1 =
            estimate_B1(model, scalar(0.5), scalar(0.5), 2, 50000, 1, derive_stream(155, 0), ff);
        auto mo = TwoStateModel::two_state_moments(0.5, 50);
        double i = TwoStateModel::fisher_two_state(0.5, 50).scalar();
        double exact = std::pow(mo.score_fourth / (i * i), 0.25);
        CHECK(std::abs(b1.value - exact) <= 3.0 * b1.std_error);
    }
}

TEST_CASE("radius predicate thresholds", "[localization]") {
    CHECK(radius_threshold(1.0, 1.0) == Catch::Approx(0.044194).margin(5e-7));
    CHECK(check_radius(0.04, 1.0, 1.0));
    CHECK_FALSE(check_radius(0.05, 1.0, 1.0));
    CHECK(check_radius(0.044, 0.0, 1.0));  // vanishing B1 means an infinite reciprocal
    CHECK_THROWS(check_radius(-0.1, 1.0, 1.0));
}

TEST_CASE("averaged Fisher matrix I2", "[localization]") {
    SECTION("constant integrand") {
        FisherFn constant = [](const ParamVector&) {
            return FisherMatrix((Matrix(1, 1) << 5.5).finished(),
                                FisherMatrix::Normalization::PerTrajectory);
        };
        CHECK(i2_matrix(scalar(0.0), scalar(1.0), constant, 32).scalar() ==
              Catch::Approx(5.5).epsilon(1e-12));
    }
    SECTION("two-state symmetric segment reduces to the plain average") {
        TwoStateModel model(0.05, 2);
        FisherFn ff = two_state_fisher(model);
        double v = i2_matrix(scalar(0.4), scalar(0.6), ff, 256).scalar();
        CHECK(v == Catch::Approx(10.0 * std::log(1.5)).epsilon(1e-9));
        CHECK(v == Catch::Approx(4.05465).margin(5e-6));
    }
    SECTION("quadrature order convergence to relative 1e-8") {
        TwoStateModel model(0.05, 7);
        FisherFn ff = two_state_fisher(model);
        double a = i2_matrix(scalar(0.2), scalar(0.75), ff, 64).scalar();
        double b = i2_matrix(scalar(0.2), scalar(0.75), ff, 4096).scalar();
        CHECK(std::abs(a - b) <= 1e-8 * std::abs(b));
    }
}

TEST_CASE("local quadratic expansion ratios", "[localization]") {
    TwoStateModel m2(0.05, 2);
    FisherFn ff2 = two_state_fisher(m2);
    SECTION("tiny perturbation reproduces the asymptotic quarter") {
        LocalQuadraticCheck c = verify_local_quadratic(m2, scalar(0.5), scalar(0.51), 2000,
                                                       derive_stream(156, 0), ff2);
        CHECK(std::abs(c.ratio - 0.25002) < 1e-3);
        CHECK(c.radius_ok);
        CHECK(c.in_bounds);
        LocalQuadraticCheck fine = verify_local_quadratic(m2, scalar(0.5), scalar(0.501), 2000,
                                                          derive_stream(157, 0), ff2);
        CHECK(std::abs(fine.ratio - 0.25) < 0.0025);
    }
    SECTION("wider separations stay inside [3/16, 5/16]") {
        TwoStateModel m50(0.05, 50);
        FisherFn ff50 = two_state_fisher(m50);
        LocalQuadraticCheck c = verify_local_quadratic(m50, scalar(0.5), scalar(0.6), 2000,
                                                       derive_stream(158, 0), ff50);
        CHECK(c.in_bounds);
    }
    CHECK_THROWS(verify_local_quadratic(m2, scalar(0.5), scalar(0.5), 500,
                                        derive_stream(159, 0), ff2));
}

TEST_CASE("FI radius predicate", "[localization]") {
    TwoStateModel model(0.05, 2);
    FisherFn ff = two_state_fisher(model);
    SECTION("coincident parameters") {
        FiRadiusCheck c = check_fi_radius(scalar(0.5), scalar(0.5), ff, 9);
        CHECK(c.sup_dev == 0.0);
        CHECK(c.ok);
    }
    SECTION("scalar hand values") {
        FiRadiusCheck near = check_fi_radius(scalar(0.5), scalar(0.4), ff, 17);
        CHECK(near.sup_dev == Catch::Approx(0.25 / 0.24 - 1.0).epsilon(1e-10));
        CHECK(near.ok);
        FiRadiusCheck far = check_fi_radius(scalar(0.5), scalar(0.1), ff, 17);
        CHECK(far.sup_dev == Catch::Approx(0.25 / 0.09 - 1.0).epsilon(1e-10));
        CHECK_FALSE(far.ok);
    }
}

TEST_CASE("direction supremum grows with nested direction sets", "[localization]") {
    SinGlmModel model(2, 1.0, 6, 2.0);
    Vector a(4), b(4);
    a << 0.5, 0.2, -0.3, 0.4;
    b << 0.55, 0.2, -0.3, 0.45;
    FisherFn ff = model_fisher_fn(model, 2500, 4321);
    RngStream base = derive_stream(160, 0);
    MomentEstimate few = estimate_B1(model, a, b, 4, 3000, 5, base, ff);
    MomentEstimate more = estimate_B1(model, a, b, 16, 3000, 5, base, ff);
    CHECK(more.value >= few.value - 1e-12);
    MomentEstimate few2 = estimate_B2(model, a, b, 4, 1500, 5, base, ff);
    MomentEstimate more2 = estimate_B2(model, a, b, 16, 1500, 5, base, ff);
    CHECK(more2.value >= few2.value - 1e-12);
}

TEST_CASE("I2 is sandwiched by I(theta_star) under the FI radius", "[localization]") {
    TwoStateModel model(0.05, 30);
    FisherFn ff = two_state_fisher(model);
    RngStream rng = derive_stream(161, 0);
    int verified = 0;
    for (int i = 0; i < 50; ++i) {
        double star = 0.2 + 0.6 * rng.uniform();
        double hat = star + 0.1 * (rng.uniform() - 0.5);
        hat = std::min(0.95, std::max(0.05, hat));
        if (!check_fi_radius(scalar(star), scalar(hat), ff, 9).ok) continue;
        ++verified;
        double i2 = i2_matrix(scalar(star), scalar(hat), ff, 64).scalar();
        double istar = model.fisher(scalar(star)).scalar();
        REQUIRE(i2 >= 0.5 * istar - 1e-9);
        REQUIRE(i2 <= 1.5 * istar + 1e-9);
    }
    CHECK(verified > 30);
}

TEST_CASE("Fisher Lipschitz bound on dynamics models", "[localization]") {
    // || I(t1) - I(t2) ||_op <= T [ Lip ||dt|| + 2 sqrt2 B_I H ] + 3 SE
    SECTION("sinusoidal GLM") {
        SinGlmModel model(2, 1.0, 8, 2.0);
        const int n = 4000;
        RngStream rng = derive_stream(162, 0);
        // empirical Lip-hat: max_t (2/sigma^2) E ||z_t||^3; B_I-hat via axis dirs
        double lip = 0.0, bi = 0.0;
        {
            Vector probe(4);
            probe << 0.6, 0.2, -0.3, 0.5;
            double e3 = 0.0, e4 = 0.0;
            for (int i = 0; i < 2000; ++i) {
                RngStream r = derive_stream(163, i);
                Trajectory z = model.sample(probe, r);
                for (int t = 0; t + 1 < z.horizon(); ++t) {
                    e3 = std::max(e3, std::pow(z.state(t).norm(), 3));
                    e4 += std::pow(z.state(t).norm(), 4);
                }
            }
            lip = 2.0 * e3;                        // sigma = 1
            bi = std::sqrt(e4 / (2000.0 * 7.0));   // sup_v sqrt E (v' I_t v)^2 proxy
        }
        for (int trial = 0; trial < 25; ++trial) {
            Vector a = model.domain().sample_uniform(rng) * 0.6;
            Vector b = a + 0.1 * rng.normal_vector(4);
            if (!model.domain().contains(b)) continue;
            FisherMatrix fa = fisher_mc(model, a, n, derive_stream(164, trial));
            FisherMatrix fb = fisher_mc(model, b, n, derive_stream(165, trial));
            Eigen::SelfAdjointEigenSolver<Matrix> es(fa.entries() - fb.entries(),
                                                     Eigen::EigenvaluesOnly);
            double opdiff = std::max(std::abs(es.eigenvalues().minCoeff()),
                                     std::abs(es.eigenvalues().maxCoeff()));
            DivergenceEstimate h =
                hellinger_sq_mc(model, a, b, 4000, derive_stream(166, trial));
            double hval = std::sqrt(std::max(0.0, h.value + 3.0 * h.std_error));
            Eigen::SelfAdjointEigenSolver<Matrix> se_es(fa.entry_se() + fb.entry_se(),
                                                        Eigen::EigenvaluesOnly);
            double se_op = std::max(std::abs(se_es.eigenvalues().minCoeff()),
                                    std::abs(se_es.eigenvalues().maxCoeff()));
            double rhs = 8.0 * (lip * (a - b).norm() + 2.0 * std::sqrt(2.0) * bi * hval) +
                         3.0 * se_op;
            REQUIRE(opdiff <= rhs);
        }
    }
    SECTION("attention (constant Lipschitz data)") {
        AttentionModel model = AttentionModel::random(5, 2, 8, 1.0, 7, 1.2);
        double cop = model.classifier_opnorm();
        double lip = 3.0 * cop * cop * cop;
        double bi = cop * cop;
        RngStream rng = derive_stream(167, 0);
        const int n = 4000;
        for (int trial = 0; trial < 25; ++trial) {
            Vector a = model.domain().sample_uniform(rng) * 0.6;
            Vector b = a + 0.1 * rng.normal_vector(4);
            if (!model.domain().contains(b)) continue;
            FisherMatrix fa = fisher_mc(model, a, n, derive_stream(168, trial));
            FisherMatrix fb = fisher_mc(model, b, n, derive_stream(169, trial));
            Eigen::SelfAdjointEigenSolver<Matrix> es(fa.entries() - fb.entries(),
                                                     Eigen::EigenvaluesOnly);
            double opdiff = std::max(std::abs(es.eigenvalues().minCoeff()),
                                     std::abs(es.eigenvalues().maxCoeff()));
            DivergenceEstimate h =
                hellinger_sq_mc(model, a, b, 4000, derive_stream(170, trial));
            double hval = std::sqrt(std::max(0.0, h.value + 3.0 * h.std_error));
            Eigen::SelfAdjointEigenSolver<Matrix> se_es(fa.entry_se() + fb.entry_se(),
                                                        Eigen::EigenvaluesOnly);
            double se_op = std::max(std::abs(se_es.eigenvalues().minCoeff()),
                                    std::abs(se_es.eigenvalues().maxCoeff()));
            double rhs = 8.0 * (lip * (a - b).norm() + 2.0 * std::sqrt(2.0) * bi * hval) +
                         3.0 * se_op;
            REQUIRE(opdiff <= rhs);
        }
    }
}

TEST_CASE("quadratic ratio holds across the remaining families", "[localization]") {
    // for families without closed-form Hellinger the ratio uses the MC
    // estimator; separations are sized so H^2 ~ 5e-3 keeps the MC noise small
    // while the radius predicate still passes
    auto check = [](const ModelSpec& model, const Vector& a, const Vector& b, int n_mc,
                    std::uint64_t seed) {
        FisherFn ff = model.has_analytic_fisher()
                          ? FisherFn([&model](const ParamVector& th) { return model.fisher(th); })
                          : model_fisher_fn(model, 3000, seed ^ 0xF1);
        LocalQuadraticCheck c = verify_local_quadratic(model, a, b, n_mc,
                                                       derive_stream(seed, 0), ff,
                                                       /*n_s=*/5, /*n_dirs=*/8, /*n_quad=*/16);
        INFO(model.id() << " ratio " << c.ratio << " H^2 " << c.hellinger_sq);
        CHECK(c.radius_ok);
        CHECK(c.in_bounds);
    };
    {
        MixtureModel m(0.05, 50);
        Vector a(2), b(2);
        a << 0.8, 0.2;
        b << 0.81, 0.21;
        check(m, a, b, 200000, 771);
    }
    {
        RegressionModel m = RegressionModel::lds(2, 8, make_noise_smoothed_laplace(5.0, 1.0),
                                                 2.0);
        Vector a(4), b(4);
        a << 0.5, -0.2, 0.1, 0.4;
        b = a.array() + 0.05;
        check(m, a, b, 200000, 772);
    }
    {
        SinGlmModel m(2, 1.0, 8, 2.0);
        Vector a(4), b(4);
        a << 0.6, 0.3, -0.4, 0.5;
        b = a.array() + 0.05;
        check(m, a, b, 200000, 773);
    }
    {
        // well-conditioned fixed attention design (pentagon embeddings)
        Matrix e(5, 2);
        for (int i = 0; i < 5; ++i) {
            e(i, 0) = std::cos(2.0 * kPi * i / 5);
            e(i, 1) = std::sin(2.0 * kPi * i / 5);
        }
        Matrix c0(4, 2);
        c0 << 1, 0, 0, 1, 1, 1, -1, 1;
        Eigen::JacobiSVD<Matrix> svd(c0, Eigen::ComputeThinU | Eigen::ComputeThinV);
        AttentionModel m(e, 1.2 * svd.matrixU() * svd.matrixV().transpose(), 8, 1.0);
        Vector a(4), b(4);
        a << 0.2, -0.1, 0.15, 0.05;
        b = a.array() + 0.15;
        check(m, a, b, 200000, 774);
    }
}

TEST_CASE("end-to-end localization report", "[localization]") {
    TwoStateModel model(0.05, 100);
    Vector star = scalar(0.7);
    SECTION("well-sized run passes both predicates and the sandwich") {
        TrajectoryDataset ds = generate_dataset(model, star, 20260101, 500);
        LocalizationConfig cfg;
        cfg.n_dirs = 8;
        cfg.seed = 5;
        LocalizationReport rep = full_report(model, ds, star, cfg);
        CHECK(rep.radius_ok);
        CHECK(rep.fi_radius_ok);
        CHECK(rep.sandwich_checked);
        CHECK(rep.sandwich_ok);
        CHECK(rep.ratio > 3.0 / 16.0);
        CHECK(rep.ratio < 5.0 / 16.0);
        CHECK(rep.note.empty());
        std::string text = format_report(rep);
        CHECK(text.find("radius_ok 1") != std::string::npos);
        CHECK(text.find("sandwich_ok 1") != std::string::npos);
    }
    SECTION("tiny m lands outside the localization regime") {
        TrajectoryDataset ds = generate_dataset(model, star, 3, 2);
        LocalizationConfig cfg;
        cfg.n_dirs = 8;
        cfg.seed = 6;
        LocalizationReport rep = full_report(model, ds, star, cfg);
        CHECK_FALSE(rep.radius_ok);
        CHECK_FALSE(rep.sandwich_checked);
        CHECK(rep.note.find("outside localization regime") != std::string::npos);
    }
}
