#include <catch2/catch_amalgamated.hpp>

#include "common.hpp"
#include "helloc/models/attention.hpp"

using namespace helloc;

TEST_CASE("zero parameter gives the uniform next-token law", "[attention]") {
    AttentionModel model = AttentionModel::random(5, 2, 12, 1.0, 7);
    Vector zero = Vector::Zero(4);
    for (auto ctx : {std::vector<int>{1, 2}, {3, 3, 4}, {5, 1, 2, 3}}) {
        Vector p = model.next_token_dist(zero, ctx);
        REQUIRE((p.array() - 0.2).abs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("step matrix structure", "[attention]") {
    AttentionModel model = AttentionModel::random(5, 2, 12, 1.0, 7, 1.4);
    RngStream draw = derive_stream(121, 0);
    SECTION("row K is identically zero") {
        Matrix m = model.attention_step_matrix({2, 4, 1});
        CHECK(m.row(4).cwiseAbs().maxCoeff() == 0.0);
        CHECK(m.rows() == 5);
        CHECK(m.cols() == 4);
    }
    SECTION("operator norm bounded by ||C||_op on random contexts") {
        double cop = model.classifier_opnorm();
        Vector th = 0.5 * draw.normal_vector(4);
        for (int i = 0; i < 1000; ++i) {
            RngStream rng = derive_stream(122, i);
            Trajectory z = model.sample(th, rng);
            int t = 1 + static_cast<int>(rng.uniform_int(z.horizon() - 2));
            std::vector<int> ctx(z.token_data().begin(), z.token_data().begin() + t + 1);
            Eigen::JacobiSVD<Matrix> svd(model.attention_step_matrix(ctx));
            REQUIRE(svd.singularValues()[0] <= cop + 1e-9);
        }
    }
    SECTION("logits agree with the step matrix") {
        Vector th = 0.7 * draw.normal_vector(4);
        std::vector<int> ctx{1, 3, 2, 5};
        Vector via_matrix = model.attention_step_matrix(ctx) * th;
        Vector direct = model.logits(th, ctx);
        CHECK((via_matrix - direct).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("degenerate d = 1, K = 2 hand value") {
        // e = (e1, e2), t = 1: M = e(q)^T kron (J C e(z0)^2); entry (1,1)
        Matrix e(2, 1), c(1, 1);
        e << 1.0, -0.5;
        c << 1.0;
        AttentionModel tiny(e, c, 4, 1.0);
        Matrix m = tiny.attention_step_matrix({1, 1});
        // (1/t) * q * C * e1^2 with t = 1, q = e1 = 1
        CHECK(m(0, 0) == Catch::Approx(1.0).epsilon(1e-12));
        CHECK(m(1, 0) == 0.0);
    }
}

TEST_CASE("probability floor over the parameter ball", "[attention]") {
    AttentionModel model = AttentionModel::random(5, 2, 10, 1.0, 7, 1.3);
    double floor = model.min_prob_floor();
    CHECK(floor == Catch::Approx(std::exp(-2.0 * 1.0 * model.classifier_opnorm()) / 5.0)
                       .epsilon(1e-12));
    RngStream draw = derive_stream(123, 0);
    Vector th = draw.normal_vector(4);
    th *= 0.99 / th.norm();  // near the ball boundary
    for (int i = 0; i < 2000; ++i) {
        RngStream rng = derive_stream(124, i);
        Trajectory z = model.sample(th, rng);
        for (int t = 1; t + 1 < z.horizon(); ++t) {
            std::vector<int> ctx(z.token_data().begin(), z.token_data().begin() + t + 1);
            REQUIRE(model.next_token_dist(th, ctx).minCoeff() >= floor);
        }
    }
}

TEST_CASE("finite differences for score and hessian", "[attention]") {
    AttentionModel model = AttentionModel::random(5, 2, 9, 1.0, 7);
    Vector th(4);
    th << 0.3, -0.2, 0.5, 0.1;
    for (int i = 0; i < 8; ++i) {
        RngStream rng = derive_stream(125, i);
        Trajectory z = model.sample(th, rng);
        REQUIRE(testutil::fd_score_rel_err(model, th, z) < 1e-5);
        REQUIRE(testutil::fd_hessian_rel_err(model, th, z) < 1e-5);
    }
}

TEST_CASE("softmax pinning makes constant shifts observable", "[attention]") {
    // with the K-th logit pinned at zero, adding a constant to the K-1 head
    // logits changes the distribution; a free softmax would absorb it
    Vector head(4);
    head << 0.3, -0.1, 0.6, 0.2;
    auto pinned = [&](const Vector& x) {
        Vector lg = Vector::Zero(5);
        lg.head(4) = x;
        return AttentionModel::softmax(lg);
    };
    Vector shifted = head.array() + 0.8;
    CHECK((pinned(head) - pinned(shifted)).cwiseAbs().maxCoeff() > 1e-3);

    Vector free5(5);
    free5 << 0.3, -0.1, 0.6, 0.2, 0.0;
    Vector free5_shift = free5.array() + 0.8;
    CHECK((AttentionModel::softmax(free5) - AttentionModel::softmax(free5_shift))
              .cwiseAbs()
              .maxCoeff() < 1e-15);
}

TEST_CASE("conditional Fisher matches the Hessian in expectation", "[attention]") {
    AttentionModel model = AttentionModel::random(4, 2, 8, 1.0, 11);
    Vector th(4);
    th << 0.4, 0.1, -0.3, 0.2;
    const int n = 30000;
    McMatrixEstimate so = score_outer_mc(model, th, n, derive_stream(126, 0));
    McMatrixEstimate nh = neg_hessian_mc(model, th, n, derive_stream(127, 0));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double tol = 3.0 * std::sqrt(so.se(i, j) * so.se(i, j) + nh.se(i, j) * nh.se(i, j));
            REQUIRE(std::abs(so.mean(i, j) - nh.mean(i, j)) <= tol);
        }
    // conditional FI at a fixed context is PSD and consistent with -hessian
    std::vector<int> ctx{1, 2, 3};
    Matrix cf = model.conditional_fisher(th, ctx);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cf, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("reduced-covariance eigenvalue floor", "[attention]") {
    SECTION("hand values") {
        Vector p2(2);
        p2 << 0.5, 0.5;
        auto r2 = min_eig_reduced_cov(p2);
        CHECK(r2.lambda_min == Catch::Approx(0.25).epsilon(1e-12));
        CHECK(r2.bound == Catch::Approx(0.125).epsilon(1e-12));
        Vector p3(3);
        p3 << 1.0 / 3, 1.0 / 3, 1.0 / 3;
        auto r3 = min_eig_reduced_cov(p3);
        CHECK(r3.lambda_min == Catch::Approx(1.0 / 9.0).epsilon(1e-12));
        CHECK(r3.bound == Catch::Approx(1.0 / 24.0).epsilon(1e-12));
    }
    SECTION("random simplex points for K in {3, 5, 8}") {
        for (int k : {3, 5, 8}) {
            RngStream rng = derive_stream(128, k);
            for (int i = 0; i < 1000; ++i) {
                Vector p = testutil::dirichlet_uniform(k, rng);
                auto r = min_eig_reduced_cov(p);  // throws if the floor fails
                REQUIRE(r.lambda_min >= r.bound * (1.0 - 1e-9));
            }
        }
    }
    SECTION("bad inputs rejected") {
        Vector bad(3);
        bad << 0.5, 0.5, 0.5;
        CHECK_THROWS(min_eig_reduced_cov(bad));
        Vector neg(2);
        neg << 1.2, -0.2;
        CHECK_THROWS(min_eig_reduced_cov(neg));
    }
}

TEST_CASE("attention score has mean zero at the truth", "[attention]") {
    AttentionModel model = AttentionModel::random(5, 2, 10, 1.0, 7);
    Vector th(4);
    th << 0.3, -0.2, 0.4, 0.1;
    const int n = 50000;
    Vector sum = Vector::Zero(4), sumsq = Vector::Zero(4);
    for (int i = 0; i < n; ++i) {
        RngStream rng = derive_stream(130, i);
        Vector s = model.score(th, model.sample(th, rng));
        sum += s;
        sumsq += s.cwiseProduct(s);
    }
    for (int j = 0; j < 4; ++j) {
        double mean = sum[j] / n;
        double se = std::sqrt(std::max(0.0, sumsq[j] / n - mean * mean) / n);
        REQUIRE(std::abs(mean) <= 3.0 * se);
    }
}

TEST_CASE("sampled tokens stay in the vocabulary; rank checks enforced", "[attention]") {
    AttentionModel model = AttentionModel::random(5, 2, 15, 1.0, 3);
    Vector th(4);
    th << 0.2, -0.4, 0.3, 0.5;
    RngStream rng = derive_stream(129, 0);
    for (int i = 0; i < 200; ++i) {
        Trajectory z = model.sample(th, rng);
        for (int t = 0; t < z.horizon(); ++t) {
            REQUIRE(z.token(t) >= 1);
            REQUIRE(z.token(t) <= 5);
        }
    }
    // d + 1 <= K is required for full column rank
    CHECK_THROWS(AttentionModel::random(3, 3, 10, 1.0, 7));
}
