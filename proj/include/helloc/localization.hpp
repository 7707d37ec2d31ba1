#pragma once

// Hellinger-localization machinery: whitened score/Hessian moment bounds
// (B1, B2), the localization radius predicate, the averaged Fisher matrix
// I2, the local quadratic expansion check, and the FI-radius predicate.

#include "helloc/core.hpp"
#include "helloc/divergences.hpp"
#include "helloc/estimation.hpp"
#include "helloc/quadrature.hpp"

#include <cmath>
#include <cstring>
#include <optional>
#include <sstream>

namespace helloc {

inline std::vector<double> chebyshev_grid_01(int n) {
    std::vector<double> s(n);
    if (n == 1) {
        s[0] = 0.5;
        return s;
    }
    for (int j = 0; j < n; ++j) s[j] = 0.5 * (1.0 - std::cos(kPi * j / (n - 1)));
    return s;
}

// Fisher evaluation along segments: analytic when the model provides it,
// otherwise MC with a stream keyed off the parameter bits so repeated
// evaluations at the same point agree.
inline FisherFn model_fisher_fn(const ModelSpec& model, int mc_n, std::uint64_t seed) {
    if (model.has_analytic_fisher())
        return [&model](const ParamVector& th) { return model.fisher(th); };
    return [&model, mc_n, seed](const ParamVector& th) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (int i = 0; i < th.size(); ++i) {
            std::uint64_t bits;
            double v = th[i];
            std::memcpy(&bits, &v, sizeof(bits));
            h = (h ^ bits) * 0x100000001b3ULL;
        }
        return fisher_mc(model, th, mc_n, derive_stream(seed, h));
    };
}

struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;  // MC error at the maximizing (s, direction) cell
};

// B1: sup over segment x directions of the L^4(p_theta) norm of the whitened
// score <v, I^{-1/2} grad log p>; direction supremum approximated by the
// whitened axes plus n_dirs random unit vectors (a lower bound on the true
// supremum over the sphere).
inline MomentEstimate estimate_B1(const ModelSpec& model, const ParamVector& theta0,
                                  const ParamVector& theta1, int n_dirs, int n_mc, int n_s,
                                  const RngStream& base, const FisherFn& fisher_fn) {
    const int p = model.param_dim();
    std::vector<double> grid = chebyshev_grid_01(n_s);
    std::vector<Vector> dirs;
    dirs.reserve(p + n_dirs);
    for (int j = 0; j < p; ++j) dirs.push_back(Vector::Unit(p, j));
    for (int i = 0; i < n_dirs; ++i) {
        RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 0xD1B0000ULL + i);
        Vector v = rng.normal_vector(p);
        double n = v.norm();
        dirs.push_back(n > 0 ? Vector(v / n) : Vector::Unit(p, 0));
    }
    MomentEstimate best;
    for (std::size_t si = 0; si < grid.size(); ++si) {
        ParamVector th = theta0 + grid[si] * (theta1 - theta0);
        Matrix w;
        try {
            w = fisher_fn(th).inverse_sqrt();
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "estimate_B1: singular Fisher information at s=" << grid[si] << ": "
                << e.what();
            throw std::runtime_error(msg.str());
        }
        Matrix whitened(p, n_mc);
        parallel_for(n_mc, [&](std::int64_t i) {
            RngStream rng = derive_stream(base.master_seed(),
                                          base.stream_id() + 1 +
                                              static_cast<std::uint64_t>(si) * n_mc + i);
            Trajectory z = model.sample(th, rng);
            whitened.col(i) = w * model.score(th, z);
        });
        for (const auto& v : dirs) {
            Vector x = whitened.transpose() * v;
            double m4 = 0.0;
            for (int i = 0; i < n_mc; ++i) m4 += std::pow(x[i], 4);
            m4 /= n_mc;
            if (!(m4 > 0.0)) continue;
            double ss = 0.0;
            for (int i = 0; i < n_mc; ++i) ss += std::pow(std::pow(x[i], 4) - m4, 2);
            double se_m4 = std::sqrt(ss / (n_mc - 1.0) / n_mc);
            double est = std::pow(m4, 0.25);
            double se = se_m4 / (4.0 * std::pow(m4, 0.75));
            if (est > best.value) {
                best.value = est;
                best.std_error = se;
            }
        }
    }
    return best;
}

// B2: same supremum with the whitened Hessian quadratic form in L^2(p_theta).
inline MomentEstimate estimate_B2(const ModelSpec& model, const ParamVector& theta0,
                                  const ParamVector& theta1, int n_dirs, int n_mc, int n_s,
                                  const RngStream& base, const FisherFn& fisher_fn) {
    const int p = model.param_dim();
    std::vector<double> grid = chebyshev_grid_01(n_s);
    std::vector<Vector> dirs;
    dirs.reserve(p + n_dirs);
    for (int j = 0; j < p; ++j) dirs.push_back(Vector::Unit(p, j));
    for (int i = 0; i < n_dirs; ++i) {
        RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 0xD1B0000ULL + i);
        Vector v = rng.normal_vector(p);
        double n = v.norm();
        dirs.push_back(n > 0 ? Vector(v / n) : Vector::Unit(p, 0));
    }
    MomentEstimate best;
    for (std::size_t si = 0; si < grid.size(); ++si) {
        ParamVector th = theta0 + grid[si] * (theta1 - theta0);
        Matrix w;
        try {
            w = fisher_fn(th).inverse_sqrt();
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "estimate_B2: singular Fisher information at s=" << grid[si] << ": "
                << e.what();
            throw std::runtime_error(msg.str());
        }
        std::vector<Matrix> whitened(n_mc);
        parallel_for(n_mc, [&](std::int64_t i) {
            RngStream rng = derive_stream(base.master_seed(),
                                          base.stream_id() + 1 +
                                              static_cast<std::uint64_t>(si) * n_mc + i);
            Trajectory z = model.sample(th, rng);
            whitened[i] = w * model.hessian(th, z) * w;
        });
        for (const auto& v : dirs) {
            double m2 = 0.0;
            std::vector<double> vals(n_mc);
            for (int i = 0; i < n_mc; ++i) {
                vals[i] = v.dot(whitened[i] * v);
                m2 += vals[i] * vals[i];
            }
            m2 /= n_mc;
            if (!(m2 > 0.0)) continue;
            double ss = 0.0;
            for (int i = 0; i < n_mc; ++i) ss += std::pow(vals[i] * vals[i] - m2, 2);
            double se_m2 = std::sqrt(ss / (n_mc - 1.0) / n_mc);
            double est = std::sqrt(m2);
            double se = se_m2 / (2.0 * est);
            if (est > best.value) {
                best.value = est;
                best.std_error = se;
            }
        }
    }
    return best;
}

// localization radius predicate: h_sup <= (1/(16 sqrt 2)) min{1/B1^2, 1/B2};
// vanishing moments make the right side +infinity
inline bool check_radius(double h_sup, double b1, double b2) {
    if (h_sup < 0.0 || b1 < 0.0 || b2 < 0.0)
        throw std::invalid_argument("check_radius: inputs must be nonnegative");
    double r1 = b1 > 0.0 ? 1.0 / (b1 * b1) : std::numeric_limits<double>::infinity();
    double r2 = b2 > 0.0 ? 1.0 / b2 : std::numeric_limits<double>::infinity();
    double threshold = std::min(r1, r2) / (16.0 * std::sqrt(2.0));
    return h_sup <= threshold;
}

inline double radius_threshold(double b1, double b2) {
    double r1 = b1 > 0.0 ? 1.0 / (b1 * b1) : std::numeric_limits<double>::infinity();
    double r2 = b2 > 0.0 ? 1.0 / b2 : std::numeric_limits<double>::infinity();
    return std::min(r1, r2) / (16.0 * std::sqrt(2.0));
}

// I2(theta0, theta1) = 2 int_0^1 (1-s) I(theta(s)) ds
inline FisherMatrix i2_matrix(const ParamVector& theta0, const ParamVector& theta1,
                              const FisherFn& fisher_fn, int n_quad) {
    Vector delta = theta1 - theta0;
    Matrix acc = integrate_matrix_01(
        [&](double s) { return fisher_fn(theta0 + s * delta).entries(); },
        [](double s) { return 2.0 * (1.0 - s); }, n_quad);
    return FisherMatrix(acc, FisherMatrix::Normalization::PerTrajectory);
}

// ---------------------------------------------------------------------------
// Local quadratic expansion check.

struct LocalQuadraticCheck {
    double ratio = 0.0;       // H^2 / ||delta||^2_{I2}
    bool radius_ok = false;   // Hellinger radius predicate along the segment
    bool in_bounds = false;   // ratio in [3/16, 5/16]
    double hellinger_sq = 0.0;
};

inline double best_hellinger_sq(const ModelSpec& model, const ParamVector& theta0,
                                const ParamVector& theta1, int n_mc, const RngStream& base) {
    if (model.has_closed_form_hellinger())
        return model.hellinger_sq_closed_form(theta0, theta1);
    return hellinger_sq_mc(model, theta0, theta1, n_mc, base).value;
}

inline LocalQuadraticCheck verify_local_quadratic(const ModelSpec& model,
                                                  const ParamVector& theta0,
                                                  const ParamVector& theta1, int n_mc,
                                                  const RngStream& base,
                                                  const FisherFn& fisher_fn, int n_s = 17,
                                                  int n_dirs = 32, int n_quad = 64) {
    Vector delta = theta1 - theta0;
    if (delta.norm() == 0.0)
        throw std::invalid_argument("verify_local_quadratic: theta0 == theta1");
    MomentEstimate b1 = estimate_B1(model, theta0, theta1, n_dirs, n_mc, n_s, base, fisher_fn);
    MomentEstimate b2 = estimate_B2(model, theta0, theta1, n_dirs, n_mc, n_s, base, fisher_fn);

    double h_sup_sq = 0.0;
    std::vector<double> grid = chebyshev_grid_01(n_s);
    for (std::size_t si = 0; si < grid.size(); ++si) {
        ParamVector th = theta0 + grid[si] * delta;
        RngStream sub = derive_stream(base.master_seed(),
                                      base.stream_id() + 0x48534200ULL + si);
        h_sup_sq = std::max(h_sup_sq, best_hellinger_sq(model, theta0, th, n_mc, sub));
    }

    LocalQuadraticCheck out;
    out.radius_ok = check_radius(h_sup_sq, b1.value, b2.value);
    FisherMatrix i2 = i2_matrix(theta0, theta1, fisher_fn, n_quad);
    RngStream hs = derive_stream(base.master_seed(), base.stream_id() + 0x48534201ULL);
    out.hellinger_sq = best_hellinger_sq(model, theta0, theta1, n_mc, hs);
    out.ratio = out.hellinger_sq / i2.quad_form(delta);
    out.in_bounds = out.ratio >= 3.0 / 16.0 && out.ratio <= 5.0 / 16.0;
    return out;
}

// ---------------------------------------------------------------------------
// FI-radius predicate (operator-norm deviation of whitened Fisher matrices).

struct FiRadiusCheck {
    double sup_dev = 0.0;
    bool ok = false;
};

inline FiRadiusCheck check_fi_radius(const ParamVector& theta_star, const ParamVector& theta_hat,
                                     const FisherFn& fisher_fn, int n_s) {
    Matrix w = fisher_fn(theta_star).inverse_sqrt();
    const int p = static_cast<int>(theta_star.size());
    FiRadiusCheck out;
    for (double s : chebyshev_grid_01(n_s)) {
        ParamVector th = theta_star + s * (theta_hat - theta_star);
        Matrix dev = w * fisher_fn(th).entries() * w - Matrix::Identity(p, p);
        Eigen::SelfAdjointEigenSolver<Matrix> es(dev, Eigen::EigenvaluesOnly);
        double op = std::max(std::abs(es.eigenvalues().minCoeff()),
                             std::abs(es.eigenvalues().maxCoeff()));
        out.sup_dev = std::max(out.sup_dev, op);
    }
    out.ok = out.sup_dev <= 0.5;
    return out;
}

// ---------------------------------------------------------------------------
// End-to-end report over a dataset.

struct LocalizationConfig {
    int n_s = 17;
    int n_dirs = 256;
    int n_mc = 4096;          // B-moment Monte Carlo size
    int n_quad = 64;
    int fisher_mc_n = 2000;   // used when the model has no analytic Fisher
    int hellinger_mc_n = 0;   // 0 = choose so SE < 5% of the radius threshold
    bool use_discretized_mle = false;
    double delta = 0.05;      // feeds the discretized-MLE resolution rule
    AscentConfig ascent;
    std::uint64_t seed = 0;
};

struct LocalizationReport {
    MomentEstimate B1, B2;
    DivergenceEstimate hellinger_sup;  // sup over the segment grid, squared
    bool radius_ok = false;
    bool fi_radius_ok = false;
    FisherMatrix I2;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    double fi_sup_dev = 0.0;

    ParamVector theta_hat;
    double hellinger_sq_endpoint = 0.0;
    bool sandwich_checked = false;   // both predicates held
    bool sandwich_ok = false;        // (3/32)|d|^2_I* <= H^2 <= (15/32)|d|^2_I*
    double sandwich_lower = 0.0, sandwich_upper = 0.0;
    std::string note;
};

inline LocalizationReport full_report(const ModelSpec& model, const TrajectoryDataset& data,
                                      const ParamVector& theta_star,
                                      const LocalizationConfig& cfg) {
    LocalizationReport rep;
    FisherFn fisher_fn = model_fisher_fn(model, cfg.fisher_mc_n, cfg.seed ^ 0xF154E500ULL);

    // Step 0: the MLE under study
    if (cfg.use_discretized_mle) {
        FisherMatrix imax = model.has_analytic_fisher()
                                ? model.fisher(model.domain().center())
                                : fisher_fn(model.domain().center());
        CoverSet cover = build_cover(model.domain(), imax,
                                     epsilon_rule(cfg.delta, data.size()));
        rep.theta_hat = model.canonicalize(mle_discretized(data, model, cover).theta_hat);
    } else {
        AscentConfig ac = cfg.ascent;
        ac.start_seed = cfg.seed ^ 0x57A27500ULL;
        rep.theta_hat = model.canonicalize(mle_continuous(data, model, ac).theta_hat);
    }
    Vector delta = rep.theta_hat - theta_star;

    RngStream base = derive_stream(cfg.seed, 0x10CA117ULL);

    // Steps 1-2: whitened moment bounds along conv{theta_star, theta_hat}
    rep.B1 = estimate_B1(model, theta_star, rep.theta_hat, cfg.n_dirs, cfg.n_mc, cfg.n_s, base,
                         fisher_fn);
    rep.B2 = estimate_B2(model, theta_star, rep.theta_hat, cfg.n_dirs, cfg.n_mc, cfg.n_s,
                         derive_stream(cfg.seed, 0x10CA118ULL), fisher_fn);
    double threshold = radius_threshold(rep.B1.value, rep.B2.value);

    // Step 3: Hellinger sup over the segment grid (closed form when the model
    // provides one, else MC sized against the radius threshold)
    int h_n = cfg.hellinger_mc_n;
    if (h_n == 0) h_n = 4096;
    double h_sup_sq = 0.0;
    bool mc_used = false;
    long mc_n_total = 0;
    std::vector<double> grid = chebyshev_grid_01(cfg.n_s);
    for (std::size_t si = 0; si < grid.size(); ++si) {
        ParamVector th = theta_star + grid[si] * delta;
        if (model.has_closed_form_hellinger()) {
            h_sup_sq = std::max(h_sup_sq, model.hellinger_sq_closed_form(theta_star, th));
        } else {
            mc_used = true;
            int n = h_n;
            for (;;) {
                DivergenceEstimate est = hellinger_sq_mc(
                    model, theta_star, th, n,
                    derive_stream(cfg.seed, 0x48535500ULL + si));
                if (cfg.hellinger_mc_n != 0 || est.std_error <= 0.05 * threshold ||
                    n >= (1 << 20)) {
                    h_sup_sq = std::max(h_sup_sq, est.value);
                    mc_n_total += est.n_samples;
                    break;
                }
                n *= 4;
            }
        }
    }
    rep.hellinger_sup.value = h_sup_sq;
    rep.hellinger_sup.method = mc_used ? DivergenceEstimate::Method::MonteCarlo
                                       : DivergenceEstimate::Method::Tensorized;
    rep.hellinger_sup.n_samples = mc_n_total;

    rep.radius_ok = check_radius(rep.hellinger_sup.value, rep.B1.value, rep.B2.value);

    // Step 4: averaged FI matrix and the expansion ratio
    rep.I2 = i2_matrix(theta_star, rep.theta_hat, fisher_fn, cfg.n_quad);
    RngStream hend = derive_stream(cfg.seed, 0x48535501ULL);
    rep.hellinger_sq_endpoint =
        delta.norm() > 0.0 ? best_hellinger_sq(model, theta_star, rep.theta_hat,
                                               std::max(cfg.n_mc, h_n), hend)
                           : 0.0;
    if (delta.norm() > 0.0) rep.ratio = rep.hellinger_sq_endpoint / rep.I2.quad_form(delta);

    // Step 5: FI radius
    FiRadiusCheck fi = check_fi_radius(theta_star, rep.theta_hat, fisher_fn, cfg.n_s);
    rep.fi_radius_ok = fi.ok;
    rep.fi_sup_dev = fi.sup_dev;

    if (rep.radius_ok && rep.fi_radius_ok) {
        rep.sandwich_checked = true;
        FisherMatrix istar = fisher_fn(theta_star);
        double q = istar.quad_form(delta);
        rep.sandwich_lower = 3.0 / 32.0 * q;
        rep.sandwich_upper = 15.0 / 32.0 * q;
        rep.sandwich_ok = rep.hellinger_sq_endpoint >= rep.sandwich_lower &&
                          rep.hellinger_sq_endpoint <= rep.sandwich_upper;
    } else {
        rep.note = "outside localization regime; quadratic sandwich not asserted";
    }
    return rep;
}

// flat key-value serialization (consumed by the CLI and the harness logs)
inline std::string format_report(const LocalizationReport& rep) {
    std::ostringstream os;
    os.precision(12);
    os << "B1 " << rep.B1.value << "\n"
       << "B1_se " << rep.B1.std_error << "\n"
       << "B2 " << rep.B2.value << "\n"
       << "B2_se " << rep.B2.std_error << "\n"
       << "hellinger_sup_sq " << rep.hellinger_sup.value << "\n"
       << "radius_ok " << (rep.radius_ok ? 1 : 0) << "\n"
       << "fi_radius_ok " << (rep.fi_radius_ok ? 1 : 0) << "\n"
       << "fi_sup_dev " << rep.fi_sup_dev << "\n"
       << "ratio " << rep.ratio << "\n"
       << "hellinger_sq_endpoint " << rep.hellinger_sq_endpoint << "\n"
       << "sandwich_checked " << (rep.sandwich_checked ? 1 : 0) << "\n"
       << "sandwich_ok " << (rep.sandwich_ok ? 1 : 0) << "\n"
       << "sandwich_lower " << rep.sandwich_lower << "\n"
       << "sandwich_upper " << rep.sandwich_upper << "\n";
    os << "theta_hat";
    for (int i = 0; i < rep.theta_hat.size(); ++i) os << " " << rep.theta_hat[i];
    os << "\n";
    if (!rep.note.empty()) os << "note " << rep.note << "\n";
    return os.str();
}

}  // namespace helloc
