#pragma once

// Shared domain types for the multi-trajectory MLE lab: parameter vectors and
// domains, trajectories, Fisher matrices, deterministic seeded RNG streams.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace helloc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ParamVector = Eigen::VectorXd;

constexpr double kPi = 3.14159265358979323846;

inline double log_sum_exp(double a, double b) {
    double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// sigmoid(x) = 1/(1+exp(-x)) without overflow
inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Seeded RNG streams
//
// Counter-based derivation: (master_seed, stream_id) -> independent stream.
// Same pair gives the identical sequence regardless of thread schedule;
// distinct pairs are decorrelated via splitmix64 finalizer mixing.

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
}  // namespace detail

class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
        : master_seed_(master_seed), stream_id_(stream_id) {
        std::uint64_t s = master_seed;
        std::uint64_t a = detail::splitmix64(s);
        s = stream_id ^ 0x5851f42d4c957f2dULL;
        std::uint64_t b = detail::splitmix64(s);
        s = a ^ detail::rotl(b, 32);
        for (auto& w : state_) w = detail::splitmix64(s);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    // xoshiro256++
    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; consumes exactly two uniforms per pair of normals
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * kPi * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    Vector normal_vector(int d) {
        Vector v(d);
        for (int i = 0; i < d; ++i) v[i] = normal();
        return v;
    }

private:
    std::uint64_t master_seed_, stream_id_;
    std::uint64_t state_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

inline RngStream derive_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
    return RngStream(master_seed, stream_id);
}

// ---------------------------------------------------------------------------
// sufficient_m: smallest integer m with m >= a log^nu(b m), via the implicit
// bound m >= (1+nu)^nu a log^nu((1+nu)^nu a b).  Degenerate inputs give 0.
inline long long sufficient_m(double a, double b, double nu) {
    if (a < 0 || b < 0 || nu < 0) throw std::invalid_argument("sufficient_m: negative input");
    double c = std::pow(1.0 + nu, nu);
    double arg = c * a * b;
    if (!(arg > 1.0)) return 0;
    double m = c * a * std::pow(std::log(arg), nu);
    return static_cast<long long>(std::ceil(m));
}

// ---------------------------------------------------------------------------
// Parameter domains: interval boxes and Euclidean balls, with projection.

class ParamDomain {
public:
    enum class Kind { IntervalBox, EuclideanBall };

    static ParamDomain box(const Vector& lo, const Vector& hi) {
        if (lo.size() != hi.size()) throw std::invalid_argument("box: size mismatch");
        for (int i = 0; i < lo.size(); ++i)
            if (!(lo[i] < hi[i])) throw std::invalid_argument("box: lo<hi violated");
        ParamDomain d;
        d.kind_ = Kind::IntervalBox;
        d.lo_ = lo;
        d.hi_ = hi;
        return d;
    }
    static ParamDomain box1d(double lo, double hi) {
        Vector l(1), h(1);
        l[0] = lo;
        h[0] = hi;
        return box(l, h);
    }
    static ParamDomain ball(const Vector& center, double radius) {
        if (!(radius > 0)) throw std::invalid_argument("ball: radius must be positive");
        ParamDomain d;
        d.kind_ = Kind::EuclideanBall;
        d.center_ = center;
        d.radius_ = radius;
        return d;
    }

    Kind kind() const { return kind_; }
    int dim() const { return kind_ == Kind::IntervalBox ? static_cast<int>(lo_.size())
                                                        : static_cast<int>(center_.size()); }
    const Vector& lo() const { return lo_; }
    const Vector& hi() const { return hi_; }
    const Vector& ball_center() const { return center_; }
    double ball_radius() const { return radius_; }

    bool contains(const Vector& theta, double tol = 1e-12) const {
        if (theta.size() != dim()) return false;
        if (kind_ == Kind::IntervalBox) {
            for (int i = 0; i < theta.size(); ++i)
                if (theta[i] < lo_[i] - tol || theta[i] > hi_[i] + tol) return false;
            return true;
        }
        return (theta - center_).norm() <= radius_ + tol;
    }

    Vector project(const Vector& theta) const {
        Vector out = theta;
        if (kind_ == Kind::IntervalBox) {
            for (int i = 0; i < out.size(); ++i)
                out[i] = std::min(hi_[i], std::max(lo_[i], out[i]));
            return out;
        }
        Vector d = theta - center_;
        double n = d.norm();
        if (n > radius_) out = center_ + d * (radius_ / n);
        return out;
    }

    Vector center() const {
        if (kind_ == Kind::IntervalBox) return 0.5 * (lo_ + hi_);
        return center_;
    }

    Vector sample_uniform(RngStream& rng) const {
        int p = dim();
        Vector v(p);
        if (kind_ == Kind::IntervalBox) {
            for (int i = 0; i < p; ++i) v[i] = lo_[i] + (hi_[i] - lo_[i]) * rng.uniform();
            return v;
        }
        // uniform in the ball: normal direction, radius ~ U^{1/p}
        Vector g = rng.normal_vector(p);
        double n = g.norm();
        if (n == 0.0) n = 1.0;
        double r = radius_ * std::pow(rng.uniform(), 1.0 / p);
        return center_ + g * (r / n);
    }

private:
    Kind kind_ = Kind::IntervalBox;
    Vector lo_, hi_, center_;
    double radius_ = 0.0;
};

// ---------------------------------------------------------------------------
// Trajectories: token-valued (Markov chains, attention) or real-vector-valued
// (regression, GLM).  Real states are stored flattened, time-major.

class Trajectory {
public:
    enum class Kind { Tokens, Reals };

    static Trajectory tokens(std::vector<int> tok) {
        Trajectory z;
        z.kind_ = Kind::Tokens;
        z.horizon_ = static_cast<int>(tok.size());
        z.state_dim_ = 1;
        z.tokens_ = std::move(tok);
        return z;
    }
    static Trajectory reals(int horizon, int state_dim) {
        Trajectory z;
        z.kind_ = Kind::Reals;
        z.horizon_ = horizon;
        z.state_dim_ = state_dim;
        z.reals_.assign(static_cast<std::size_t>(horizon) * state_dim, 0.0);
        return z;
    }

    Kind kind() const { return kind_; }
    int horizon() const { return horizon_; }
    int state_dim() const { return state_dim_; }

    int token(int t) const { return tokens_[static_cast<std::size_t>(t)]; }
    int& token(int t) { return tokens_[static_cast<std::size_t>(t)]; }
    const std::vector<int>& token_data() const { return tokens_; }

    Eigen::Map<const Vector> state(int t) const {
        return Eigen::Map<const Vector>(reals_.data() + static_cast<std::size_t>(t) * state_dim_,
                                        state_dim_);
    }
    Eigen::Map<Vector> state(int t) {
        return Eigen::Map<Vector>(reals_.data() + static_cast<std::size_t>(t) * state_dim_,
                                  state_dim_);
    }
    const std::vector<double>& real_data() const { return reals_; }

    bool operator==(const Trajectory& o) const {
        return kind_ == o.kind_ && horizon_ == o.horizon_ && state_dim_ == o.state_dim_ &&
               tokens_ == o.tokens_ && reals_ == o.reals_;
    }

private:
    Kind kind_ = Kind::Tokens;
    int horizon_ = 0;
    int state_dim_ = 1;
    std::vector<int> tokens_;
    std::vector<double> reals_;
};

// ---------------------------------------------------------------------------
// Fisher information matrices.  normalization tags whether entries are
// per-trajectory I(theta) or per-step Ibar(theta) = I(theta)/T.

class FisherMatrix {
public:
    enum class Normalization { PerTrajectory, PerStep };

    FisherMatrix() = default;
    FisherMatrix(Matrix entries, Normalization norm,
                 Matrix entry_se = Matrix())
        : entries_(std::move(entries)), se_(std::move(entry_se)), norm_(norm) {
        symmetrize();
        validate();
    }

    const Matrix& entries() const { return entries_; }
    const Matrix& entry_se() const { return se_; }
    bool has_se() const { return se_.size() > 0; }
    Normalization normalization() const { return norm_; }
    int dim() const { return static_cast<int>(entries_.rows()); }

    double scalar() const {
        if (dim() != 1) throw std::logic_error("FisherMatrix::scalar: dim != 1");
        return entries_(0, 0);
    }

    FisherMatrix normalized(int horizon) const {
        if (norm_ == Normalization::PerStep) return *this;
        return FisherMatrix(entries_ / horizon, Normalization::PerStep,
                            has_se() ? Matrix(se_ / horizon) : Matrix());
    }
    FisherMatrix per_trajectory(int horizon) const {
        if (norm_ == Normalization::PerTrajectory) return *this;
        return FisherMatrix(entries_ * horizon, Normalization::PerTrajectory,
                            has_se() ? Matrix(se_ * horizon) : Matrix());
    }

    Vector eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(entries_, Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }
    double lambda_min() const { return eigenvalues().minCoeff(); }
    double lambda_max() const { return eigenvalues().maxCoeff(); }

    // symmetric PSD inverse square root (eigenvalues clamped at eps)
    Matrix inverse_sqrt() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(entries_);
        Vector ev = es.eigenvalues();
        double lmax = ev.maxCoeff();
        if (!(lmax > 0)) throw std::runtime_error("FisherMatrix: singular (no positive eigenvalue)");
        Vector inv = ev;
        for (int i = 0; i < inv.size(); ++i) {
            if (ev[i] <= 1e-14 * lmax)
                throw std::runtime_error("FisherMatrix: singular along an eigendirection");
            inv[i] = 1.0 / std::sqrt(ev[i]);
        }
        return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    }

    double quad_form(const Vector& v) const { return v.dot(entries_ * v); }

    // invariant: symmetric to 1e-12 relative, eigenvalues >= -1e-10 * lmax
    void validate() const {
        if (entries_.rows() != entries_.cols())
            throw std::invalid_argument("FisherMatrix: not square");
        double scale = std::max(1.0, entries_.cwiseAbs().maxCoeff());
        double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-12 * scale * 4.0)
            throw std::runtime_error("FisherMatrix: symmetry violated");
        Vector ev = eigenvalues();
        double lmax = std::max(ev.maxCoeff(), 0.0);
        if (ev.minCoeff() < -1e-10 * std::max(lmax, 1.0))
            throw std::runtime_error("FisherMatrix: not numerically PSD");
    }

private:
    void symmetrize() { entries_ = ((entries_ + entries_.transpose()) * 0.5).eval(); }

    Matrix entries_;
    Matrix se_;
    Normalization norm_ = Normalization::PerTrajectory;
};

// ---------------------------------------------------------------------------
// Model interface: every generative family exposes sampling, per-trajectory
// log-likelihood, score, Hessian, and (analytic or MC) Fisher information.

class ModelSpec {
public:
    virtual ~ModelSpec() = default;

    virtual std::string id() const = 0;
    virtual int param_dim() const = 0;
    virtual int horizon() const = 0;
    virtual const ParamDomain& domain() const = 0;

    virtual Trajectory sample(const ParamVector& theta, RngStream& rng) const = 0;
    virtual double loglik(const ParamVector& theta, const Trajectory& z) const = 0;
    virtual Vector score(const ParamVector& theta, const Trajectory& z) const = 0;
    virtual Matrix hessian(const ParamVector& theta, const Trajectory& z) const = 0;

    // concavity of theta -> log p_theta(z); drives MLE start strategy
    virtual bool log_concave() const = 0;

    virtual bool has_analytic_fisher() const { return false; }
    virtual FisherMatrix fisher(const ParamVector&) const {
        throw std::logic_error("no analytic Fisher information for " + id());
    }

    // exact path-measure squared Hellinger, where the family admits one
    virtual bool has_closed_form_hellinger() const { return false; }
    virtual double hellinger_sq_closed_form(const ParamVector&, const ParamVector&) const {
        throw std::logic_error("no closed-form Hellinger distance for " + id());
    }

    // family-specific normal form of an estimate (identity unless overridden)
    virtual ParamVector canonicalize(const ParamVector& theta) const { return theta; }
};

// ---------------------------------------------------------------------------
// Datasets of m independent trajectories; bit-exact regeneration from
// (model, master_seed, m) with per-trajectory derived streams.

struct TrajectoryDataset {
    std::string model_id;
    std::uint64_t master_seed = 0;
    int horizon = 0;
    std::vector<Trajectory> trajectories;

    int size() const { return static_cast<int>(trajectories.size()); }

    bool operator==(const TrajectoryDataset& o) const {
        return model_id == o.model_id && master_seed == o.master_seed &&
               horizon == o.horizon && trajectories == o.trajectories;
    }
};

// ---------------------------------------------------------------------------
// Parallel map over an index range.  Results must be written to per-index
// slots; reductions then run in fixed index order so the worker count never
// changes output bytes.

inline std::atomic<int>& worker_count_slot() {
    static std::atomic<int> n{1};
    return n;
}
inline void set_worker_count(int n) { worker_count_slot().store(std::max(1, n)); }
inline int worker_count() { return worker_count_slot().load(); }

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    int workers = std::min<std::int64_t>(worker_count(), n);
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::int64_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

inline TrajectoryDataset generate_dataset(const ModelSpec& model, const ParamVector& theta,
                                          std::uint64_t master_seed, int m) {
    TrajectoryDataset ds;
    ds.model_id = model.id();
    ds.master_seed = master_seed;
    ds.horizon = model.horizon();
    ds.trajectories.resize(m);
    parallel_for(m, [&](std::int64_t i) {
        RngStream rng = derive_stream(master_seed, static_cast<std::uint64_t>(i));
        ds.trajectories[i] = model.sample(theta, rng);
    });
    return ds;
}

// ---------------------------------------------------------------------------
// Monte Carlo Fisher estimates shared by several model modules.

struct McMatrixEstimate {
    Matrix mean;
    Matrix se;  // entrywise standard errors
    int n = 0;
};

namespace detail {
template <typename PerPath>
McMatrixEstimate mc_matrix_mean(int p, int n, PerPath&& per_path) {
    std::vector<Matrix> vals(n);
    parallel_for(n, [&](std::int64_t i) { vals[i] = per_path(static_cast<int>(i)); });
    Matrix sum = Matrix::Zero(p, p), sumsq = Matrix::Zero(p, p);
    for (const auto& v : vals) {
        sum += v;
        sumsq += v.cwiseProduct(v);
    }
    McMatrixEstimate out;
    out.n = n;
    out.mean = sum / n;
    Matrix var = (sumsq / n - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
    out.se = (var / n).cwiseSqrt();
    return out;
}
}  // namespace detail

// E[score score^T] over n fresh trajectories (per-trajectory normalization)
inline McMatrixEstimate score_outer_mc(const ModelSpec& model, const ParamVector& theta, int n,
                                       const RngStream& base) {
    return detail::mc_matrix_mean(model.param_dim(), n, [&](int i) {
        RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
        Trajectory z = model.sample(theta, rng);
        Vector s = model.score(theta, z);
        return Matrix(s * s.transpose());
    });
}

// E[-hessian] over n fresh trajectories
inline McMatrixEstimate neg_hessian_mc(const ModelSpec& model, const ParamVector& theta, int n,
                                       const RngStream& base) {
    return detail::mc_matrix_mean(model.param_dim(), n, [&](int i) {
        RngStream rng = derive_stream(base.master_seed(), base.stream_id() + 1 + i);
        Trajectory z = model.sample(theta, rng);
        return Matrix(-model.hessian(theta, z));
    });
}

inline FisherMatrix fisher_mc(const ModelSpec& model, const ParamVector& theta, int n,
                              const RngStream& base) {
    McMatrixEstimate est = score_outer_mc(model, theta, n, base);
    return FisherMatrix(est.mean, FisherMatrix::Normalization::PerTrajectory, est.se);
}

}  // namespace helloc
