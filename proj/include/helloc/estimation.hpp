#pragma once

// Cover construction, discretized MLE over covers, continuous MLE via
// projected gradient ascent with Armijo backtracking, Fisher-weighted errors.

#include "helloc/core.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

namespace helloc {

// ---------------------------------------------------------------------------
// Covers.  Axis-aligned cell-center grids: per-axis step h chosen so the
// worst-corner Euclidean distance h sqrt(p)/2 maps to <= epsilon under the
// declared metric.

struct CoverSet {
    enum class Metric { MaxFI, Euclidean };

    std::vector<ParamVector> points;
    double epsilon = 0.0;
    Metric metric = Metric::MaxFI;
    ParamDomain domain = ParamDomain::box1d(0.0, 1.0);
    std::optional<FisherMatrix> i_max;

    double distance(const ParamVector& a, const ParamVector& b) const {
        Vector d = a - b;
        if (metric == Metric::Euclidean) return d.norm();
        return std::sqrt(std::max(0.0, i_max->quad_form(d)));
    }

    double nearest_distance(const ParamVector& theta) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : points) best = std::min(best, distance(theta, p));
        return best;
    }
};

inline CoverSet build_cover(const ParamDomain& domain, const FisherMatrix& i_max, double epsilon,
                            CoverSet::Metric metric = CoverSet::Metric::MaxFI,
                            long long cardinality_cap = 10'000'000LL) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("build_cover: epsilon > 0 required");
    const int p = domain.dim();
    double lam = 1.0;
    if (metric == CoverSet::Metric::MaxFI) {
        lam = i_max.lambda_max();
        if (!(i_max.lambda_min() > 0.0))
            throw std::invalid_argument("build_cover: I_max must be positive definite");
    }
    const double h = 2.0 * epsilon / (std::sqrt(lam) * std::sqrt(static_cast<double>(p)));

    Vector lo(p), hi(p);
    if (domain.kind() == ParamDomain::Kind::IntervalBox) {
        lo = domain.lo();
        hi = domain.hi();
    } else {
        lo = domain.ball_center().array() - domain.ball_radius();
        hi = domain.ball_center().array() + domain.ball_radius();
    }

    std::vector<long long> cells(p);
    long long total = 1;
    for (int i = 0; i < p; ++i) {
        cells[i] = std::max<long long>(1, static_cast<long long>(std::ceil((hi[i] - lo[i]) / h)));
        if (total > cardinality_cap / cells[i]) {
            std::ostringstream msg;
            msg << "build_cover: cover cardinality exceeds cap " << cardinality_cap
                << "; coarsen epsilon or use the continuous MLE";
            throw std::runtime_error(msg.str());
        }
        total *= cells[i];
    }

    CoverSet cover;
    cover.epsilon = epsilon;
    cover.metric = metric;
    cover.domain = domain;
    if (metric == CoverSet::Metric::MaxFI) cover.i_max = i_max;
    cover.points.reserve(total);

    std::vector<long long> idx(p, 0);
    Vector point(p);
    const bool ball = domain.kind() == ParamDomain::Kind::EuclideanBall;
    for (long long n = 0; n < total; ++n) {
        long long rem = n;
        for (int i = 0; i < p; ++i) {
            idx[i] = rem % cells[i];
            rem /= cells[i];
            double step = (hi[i] - lo[i]) / cells[i];
            point[i] = lo[i] + (idx[i] + 0.5) * step;
        }
        // keep boundary coverage for balls by projecting out-of-domain centers
        cover.points.push_back(ball && !domain.contains(point) ? domain.project(point)
                                                               : point);
    }
    return cover;
}

// ---------------------------------------------------------------------------
// MLE results.

struct MleResult {
    ParamVector theta_hat;
    double loglik = -std::numeric_limits<double>::infinity();
    enum class Method { Discretized, Continuous } method = Method::Continuous;
    int n_starts = 1;
    bool converged = false;
    double epsilon = 0.0;           // 0 for the continuous estimator
    double projected_grad_norm = 0.0;
    int iterations = 0;
    int excluded_points = 0;        // cover points dropped for non-finite loglik
};

inline double dataset_loglik(const ModelSpec& model, const TrajectoryDataset& data,
                             const ParamVector& theta) {
    double acc = 0.0;
    for (const auto& z : data.trajectories) acc += model.loglik(theta, z);
    return acc;
}

inline Vector dataset_score(const ModelSpec& model, const TrajectoryDataset& data,
                            const ParamVector& theta) {
    Vector acc = Vector::Zero(model.param_dim());
    for (const auto& z : data.trajectories) acc += model.score(theta, z);
    return acc;
}

// exact argmax over the cover; ties break toward the lowest cover index
inline MleResult mle_discretized(const TrajectoryDataset& data, const ModelSpec& model,
                                 const CoverSet& cover) {
    if (cover.points.empty()) throw std::invalid_argument("mle_discretized: empty cover");
    const auto n = static_cast<std::int64_t>(cover.points.size());
    std::vector<double> lls(n);
    parallel_for(n, [&](std::int64_t i) {
        lls[i] = dataset_loglik(model, data, cover.points[i]);
    });
    MleResult out;
    out.method = MleResult::Method::Discretized;
    out.epsilon = cover.epsilon;
    long best = -1;
    for (long i = 0; i < n; ++i) {
        if (!std::isfinite(lls[i])) {
            ++out.excluded_points;
            continue;
        }
        if (best < 0 || lls[i] > lls[best]) best = i;
    }
    if (best < 0) throw std::runtime_error("mle_discretized: no finite log-likelihood in cover");
    out.theta_hat = cover.points[best];
    out.loglik = lls[best];
    out.converged = true;
    return out;
}

struct AscentConfig {
    int n_starts = 8;          // used only for non-log-concave families
    int max_iters = 2000;
    double tol = 1e-8;         // projected-gradient-norm tolerance
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 60;
    std::uint64_t start_seed = 0;  // stream for the uniform multi-start draws
};

namespace detail {

struct AscentOutcome {
    ParamVector theta;
    double loglik = -std::numeric_limits<double>::infinity();
    bool converged = false;
    double pg_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

inline AscentOutcome projected_ascent(const ModelSpec& model, const TrajectoryDataset& data,
                                      ParamVector theta, const AscentConfig& cfg) {
    const ParamDomain& dom = model.domain();
    AscentOutcome out;
    double f = dataset_loglik(model, data, theta);
    double alpha = 1.0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        Vector g = dataset_score(model, data, theta);
        double pg = (theta - dom.project(theta + g)).norm();
        out.pg_norm = pg;
        out.iterations = it;
        if (pg <= cfg.tol) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        double a = alpha;
        // once the Armijo gain drops below the floating-point resolution of
        // the summed log-likelihood, fall back to steps that strictly shrink
        // the gradient mapping; pg stays measurable when f differences are
        // not.  The resolution scales with the sequential-summation noise,
        // roughly m eps |f|.
        const double fp_slack = std::numeric_limits<double>::epsilon() *
                                (std::abs(f) + 1.0) * (8.0 + data.size());
        for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
            Vector cand = dom.project(theta + a * g);
            Vector step = cand - theta;
            double ascent = g.dot(step);
            // a projected step must stay an ascent direction; boundary
            // geometry can flip the sign for large steps
            if (step.norm() == 0.0 || ascent <= 0.0) {
                a *= cfg.backtrack;
                continue;
            }
            double fc = dataset_loglik(model, data, cand);
            bool take = false;
            if (std::isfinite(fc)) {
                if (cfg.armijo_c * ascent > fp_slack) {
                    take = fc >= f + cfg.armijo_c * ascent;
                } else if (fc >= f - fp_slack) {
                    // the Armijo increment is below the resolution of f:
                    // demand strict progress in the gradient mapping instead
                    Vector gc = dataset_score(model, data, cand);
                    double pgc = (cand - dom.project(cand + gc)).norm();
                    take = pgc < pg;
                }
            }
            if (take) {
                theta = cand;
                f = fc;
                alpha = a * 2.0;  // let the step grow again after success
                accepted = true;
                break;
            }
            a *= cfg.backtrack;
        }
        if (!accepted) break;  // stationary to line-search resolution
    }
    out.theta = theta;
    out.loglik = dataset_loglik(model, data, theta);
    return out;
}

}  // namespace detail

// Projected gradient ascent with Armijo backtracking.  Log-concave families
// start once from the domain center; non-concave families use n_starts
// uniform-in-domain initializations (deterministic across worker counts).
inline MleResult mle_continuous(const TrajectoryDataset& data, const ModelSpec& model,
                                const AscentConfig& cfg = {}) {
    std::vector<ParamVector> starts;
    if (model.log_concave()) {
        starts.push_back(model.domain().center());
    } else {
        starts.reserve(cfg.n_starts);
        for (int i = 0; i < cfg.n_starts; ++i) {
            RngStream rng = derive_stream(cfg.start_seed, 0xA5CE00ULL + i);
            starts.push_back(model.domain().sample_uniform(rng));
        }
    }
    std::vector<detail::AscentOutcome> outcomes(starts.size());
    parallel_for(static_cast<std::int64_t>(starts.size()), [&](std::int64_t i) {
        outcomes[i] = detail::projected_ascent(model, data, starts[i], cfg);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < outcomes.size(); ++i)
        if (outcomes[i].loglik > outcomes[best].loglik) best = i;

    MleResult out;
    out.method = MleResult::Method::Continuous;
    out.n_starts = static_cast<int>(starts.size());
    out.theta_hat = outcomes[best].theta;
    out.loglik = outcomes[best].loglik;
    out.converged = outcomes[best].converged;
    out.projected_grad_norm = outcomes[best].pg_norm;
    out.iterations = outcomes[best].iterations;
    return out;
}

// ---------------------------------------------------------------------------
// Error metrics.

// || theta_hat - theta_star ||^2 weighted by the per-step Fisher matrix
inline double fisher_weighted_error(const ParamVector& theta_hat, const ParamVector& theta_star,
                                    const FisherMatrix& fisher_bar) {
    if (fisher_bar.normalization() != FisherMatrix::Normalization::PerStep)
        throw std::invalid_argument("fisher_weighted_error: expects the normalized Fisher matrix");
    Vector d = theta_hat - theta_star;
    return fisher_bar.quad_form(d);
}

inline ParamVector canonicalize(const ParamVector& theta_hat, const ModelSpec& model) {
    return model.canonicalize(theta_hat);
}

// resolution rule epsilon = delta / (2 sqrt(2m)) used by the discretized MLE
inline double epsilon_rule(double delta, int m) {
    return delta / (2.0 * std::sqrt(2.0 * m));
}

}  // namespace helloc
