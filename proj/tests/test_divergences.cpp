#include <catch2/catch_amalgamated.hpp>

#include "common.hpp"
#include "helloc/divergences.hpp"
#include "helloc/localization.hpp"
#include "helloc/models/mixture.hpp"
#include "helloc/models/regression.hpp"
#include "helloc/models/sin_glm.hpp"
#include "helloc/models/two_state.hpp"

using namespace helloc;

TEST_CASE("gaussian Hellinger closed form", "[divergences]") {
    Matrix eye2 = Matrix::Identity(2, 2);
    CHECK(hellinger_sq_gaussian(Vector::Zero(2), eye2, Vector::Zero(2), eye2).value == 0.0);

    DivergenceEstimate iso =
        hellinger_sq_gaussian(Vector::Zero(2), eye2, Vector::Unit(2, 0), eye2);
    CHECK(iso.value == Catch::Approx(0.23500619483080908).epsilon(1e-12));
    CHECK(iso.std_error == 0.0);

    Vector m1 = Vector::Zero(1), m2 = Vector::Zero(1);
    Matrix c1(1, 1), c2(1, 1);
    c1 << 1.0;
    c2 << 4.0;
    double expected = 2.0 * (1.0 - std::pow(4.0, 0.25) / std::sqrt(2.5));
    CHECK(hellinger_sq_gaussian(m1, c1, m2, c2).value == Catch::Approx(expected).epsilon(1e-12));
    CHECK(expected == Catch::Approx(0.211146).margin(5e-7));

    Matrix sing = Matrix::Zero(2, 2);
    CHECK_THROWS(hellinger_sq_gaussian(Vector::Zero(2), sing, Vector::Zero(2), sing));
}

TEST_CASE("two-state tensorized Hellinger against exhaustive enumeration", "[divergences]") {
    CHECK(hellinger_sq_two_state(0.3, 0.3, 7).value == 0.0);
    // T = 2 is the plain Bernoulli case
    double bern = 2.0 * std::pow(std::sqrt(0.8) - std::sqrt(0.2), 2);
    CHECK(hellinger_sq_two_state(0.2, 0.8, 2).value == Catch::Approx(0.4).epsilon(1e-12));
    CHECK(hellinger_sq_two_state(0.2, 0.8, 2).value == Catch::Approx(bern).epsilon(1e-12));

    // closed form equals brute-force path enumeration on a grid, all T <= 6
    for (int T = 2; T <= 6; ++T)
        for (double t0 : {0.1, 0.3, 0.5, 0.7, 0.9})
            for (double t1 : {0.15, 0.35, 0.5, 0.65, 0.85}) {
                double closed = hellinger_sq_two_state(t0, t1, T).value;
                double brute = testutil::enumerate_hellinger_sq_two_state(t0, t1, T);
                REQUIRE(std::abs(closed - brute) < 1e-12);
            }

    CHECK_THROWS(hellinger_sq_two_state(0.0, 0.5, 3));
    CHECK_THROWS(hellinger_sq_two_state(0.2, 0.8, 1));
}

TEST_CASE("MC Hellinger estimator", "[divergences]") {
    TwoStateModel model(0.05, 3);
    Vector a(1), b(1);
    a << 0.2;
    b << 0.8;

    SECTION("identical parameters give exactly zero") {
        DivergenceEstimate est = hellinger_sq_mc(model, a, a, 2000, derive_stream(11, 0));
        CHECK(est.value == 0.0);
        CHECK(est.std_error == 0.0);
    }
    SECTION("matches the tensorized closed form within 3 SE") {
        DivergenceEstimate est = hellinger_sq_mc(model, a, b, 100000, derive_stream(12, 0));
        double closed = hellinger_sq_two_state(0.2, 0.8, 3).value;
        CHECK(std::abs(est.value - closed) <= 3.0 * est.std_error);
    }
    SECTION("matches the Gaussian closed form within 3 SE (d = 2)") {
        testutil::GaussianLocationModel g(2, 1.0);
        Vector t0 = Vector::Zero(2), t1(2);
        t1 << 0.8, -0.4;
        DivergenceEstimate est = hellinger_sq_mc(g, t0, t1, 200000, derive_stream(13, 0));
        double closed = g.hellinger_sq_closed_form(t0, t1);
        CHECK(std::abs(est.value - closed) <= 3.0 * est.std_error);
        CHECK(est.std_error > 0.0);
    }
}

TEST_CASE("FI divergences", "[divergences]") {
    TwoStateModel model(0.1, 2);
    FisherFn ff = [&](const ParamVector& th) { return model.fisher(th); };
    Vector a(1), b(1);
    a << 0.4;
    b << 0.6;
    SECTION("coincident parameters") {
        CHECK(fi_divergence(a, a, ff, 16).value == 0.0);
    }
    SECTION("two-state with the log-odds antiderivative") {
        // int_0^1 ds/(theta(s)(1-theta(s))) = 10 ln 1.5 for theta: 0.4 -> 0.6
        double expected = std::sqrt(0.04 * 10.0 * std::log(1.5));
        CHECK(fi_divergence(a, b, ff, 128).value == Catch::Approx(expected).epsilon(1e-10));
        CHECK(expected == Catch::Approx(0.402723).margin(5e-7));
    }
    SECTION("constant Fisher matrix reduces to a scaled Euclidean distance") {
        FisherFn constant = [](const ParamVector&) {
            Matrix m(1, 1);
            m << 9.0;
            return FisherMatrix(m, FisherMatrix::Normalization::PerTrajectory);
        };
        CHECK(fi_divergence(a, b, constant, 8).value == Catch::Approx(3.0 * 0.2).epsilon(1e-12));
    }
    SECTION("max-FI divergence hand values") {
        CHECK(max_fi_divergence(a, a, model.fisher_max()) == 0.0);
        // mu = 0.1, T = 2: I_max = 1/0.09
        double v = max_fi_divergence(a, b, model.fisher_max());
        CHECK(v == Catch::Approx(std::sqrt(0.04 / 0.09)).epsilon(1e-12));
        CHECK(v == Catch::Approx(0.6667).margin(5e-5));
        FisherMatrix eye(Matrix::Identity(1, 1), FisherMatrix::Normalization::PerTrajectory);
        CHECK(max_fi_divergence(a, b, eye) == Catch::Approx(0.2).epsilon(1e-12));
    }
}

TEST_CASE("product amplification", "[divergences]") {
    CHECK(hellinger_product_amplification(0.0, 25) == 0.0);
    CHECK(hellinger_product_amplification(std::sqrt(0.4), 1) ==
          Catch::Approx(0.4).epsilon(1e-12));
    // h = delta / sqrt(2m) keeps the product below delta^2
    double delta = 0.1;
    long m = 100;
    double h = delta / std::sqrt(2.0 * m);
    CHECK(hellinger_product_amplification(h, m) <= delta * delta);
    // monotone in m
    double prev = 0.0;
    for (long k = 1; k <= 64; k *= 2) {
        double v = hellinger_product_amplification(0.3, k);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS(hellinger_product_amplification(1.5, 2));
}

TEST_CASE("dominance chain H^2 <= d_FI^2/4 <= d_Imax^2/4", "[divergences]") {
    SECTION("two-state closed forms, 200 random pairs") {
        TwoStateModel model(0.05, 9);
        FisherFn ff = [&](const ParamVector& th) { return model.fisher(th); };
        RngStream rng = derive_stream(21, 9);
        for (int i = 0; i < 200; ++i) {
            Vector a(1), b(1);
            a[0] = 0.05 + 0.9 * rng.uniform();
            b[0] = 0.05 + 0.9 * rng.uniform();
            double h2 = hellinger_sq_two_state(a[0], b[0], 9).value;
            double dfi = fi_divergence(a, b, ff, 128).value;
            double dmax = max_fi_divergence(a, b, model.fisher_max());
            REQUIRE(h2 <= 0.25 * dfi * dfi + 1e-9);
            REQUIRE(dfi <= dmax + 1e-9);
        }
    }
    SECTION("dynamics models via MC, random in-domain pairs") {
        SinGlmModel glm(2, 1.0, 6, 1.5);
        RegressionModel lds = RegressionModel::lds(2, 6, make_noise_gaussian(1.0), 1.5);
        RegressionModel lap =
            RegressionModel::lds(2, 6, make_noise_smoothed_laplace(5.0, 1.0), 1.5);
        const ModelSpec* models[] = {&glm, &lds, &lap};
        RngStream rng = derive_stream(22, 1);
        for (const ModelSpec* m : models) {
            FisherFn ff = model_fisher_fn(*m, 1500, 77);
            for (int i = 0; i < 6; ++i) {
                Vector a = m->domain().sample_uniform(rng) * 0.5;
                Vector b = m->domain().sample_uniform(rng) * 0.5;
                DivergenceEstimate h = hellinger_sq_mc(*m, a, b, 4000, derive_stream(23, i));
                double dfi = fi_divergence(a, b, ff, 8).value;
                REQUIRE(h.value <= 0.25 * dfi * dfi + 3.0 * h.std_error + 1e-6);
            }
        }
    }
}

TEST_CASE("TV lower bound through the data processing inequality", "[divergences]") {
    TwoStateModel model(0.05, 5);
    Vector a(1), b(1);
    a << 0.35;
    b << 0.75;
    DivergenceEstimate est = hellinger_sq_mc(model, a, b, 50000, derive_stream(31, 0));
    double one_step_tv = std::abs(a[0] - b[0]);
    CHECK(std::sqrt(std::max(0.0, est.value + 3.0 * est.std_error)) >= one_step_tv);
}

TEST_CASE("clamp counter stays silent on well-posed inputs", "[divergences]") {
    long before = hellinger_clamp_count().load();
    TwoStateModel model(0.05, 4);
    Vector a(1), b(1);
    a << 0.45;
    b << 0.55;
    hellinger_sq_mc(model, a, b, 20000, derive_stream(41, 0));
    CHECK(hellinger_clamp_count().load() == before);
}
