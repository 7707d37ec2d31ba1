#pragma once

// Scaling-experiment harness: (m, T) grids of replicated dataset->MLE->error
// runs, log-log slope fits, the truncated-data i.i.d. baseline, and CSV/SVG
// serialization with byte-stable formatting.

#include "helloc/core.hpp"
#include "helloc/estimation.hpp"
#include "helloc/localization.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace helloc {

struct ExperimentRecord {
    std::string model_id;
    int m = 0;
    int T = 0;
    int n_reps = 0;
    double mean_weighted_err = 0.0;
    double median_weighted_err = 0.0;
    double mean_sq_err = 0.0;
    double se = 0.0;  // standard error of mean_weighted_err across replicates
    std::uint64_t master_seed = 0;
    long wall_ms = 0;

    bool operator==(const ExperimentRecord& o) const = default;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    double r2 = 0.0;
    enum class Axis { MT, M, T } axis = Axis::MT;
};

using ModelFactory = std::function<std::unique_ptr<ModelSpec>(int horizon)>;

enum class Estimator { Continuous, Discretized };

struct ScalingSpec {
    ModelFactory make_model;
    ParamVector theta_star;
    std::vector<std::pair<int, int>> grid;  // (m, T) cells
    int n_reps = 64;
    Estimator estimator = Estimator::Continuous;
    std::uint64_t master_seed = 0;
    double delta = 0.05;       // discretized-MLE resolution rule input
    int fisher_mc_n = 4096;    // Ibar(theta_star) when no analytic Fisher
    AscentConfig ascent;
    bool measure_time = false;  // wall_ms stays 0 by default (byte-stable CSV)
    int localization_subsample = 0;  // replicates per cell to run predicates on
    LocalizationConfig loc;
};

struct CellDiagnostics {
    int m = 0, T = 0;
    int non_converged = 0;
    int localized_runs = 0;
    int radius_pass = 0;
    int fi_radius_pass = 0;
};

struct ScalingResult {
    std::vector<ExperimentRecord> records;
    std::vector<CellDiagnostics> diagnostics;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t salt) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s = salt ^ 0x6a09e667f3bcc909ULL;
    std::uint64_t b = splitmix64(s);
    s = a ^ rotl(b, 29);
    return splitmix64(s);
}

inline ScalingResult run_grid(const ScalingSpec& spec, bool baseline) {
    if (spec.grid.empty()) throw std::invalid_argument("run_scaling: empty grid");
    ScalingResult out;
    for (std::size_t cell = 0; cell < spec.grid.size(); ++cell) {
        auto [m, T] = spec.grid[cell];
        if (m < 1 || T < 2) throw std::invalid_argument("run_scaling: need m >= 1, T >= 2");
        auto t0 = std::chrono::steady_clock::now();

        std::unique_ptr<ModelSpec> model = spec.make_model(T);
        std::unique_ptr<ModelSpec> fit_model =
            baseline ? spec.make_model(2) : spec.make_model(T);

        // weighting matrix: normalized FI at the truth, full-horizon model
        FisherMatrix ibar =
            model->has_analytic_fisher()
                ? model->fisher(spec.theta_star).normalized(T)
                : fisher_mc(*model, spec.theta_star, spec.fisher_mc_n,
                            derive_stream(mix_seed(spec.master_seed, 0xF1000 + cell), 0))
                      .normalized(T);

        // discretized estimator: one cover per cell (resolution depends on m)
        std::unique_ptr<CoverSet> cover;
        if (spec.estimator == Estimator::Discretized) {
            FisherMatrix imax = fit_model->has_analytic_fisher()
                                    ? fit_model->fisher(fit_model->domain().center())
                                    : ibar.per_trajectory(T);
            cover = std::make_unique<CoverSet>(build_cover(
                fit_model->domain(), imax, epsilon_rule(spec.delta, m)));
        }

        struct RepOut {
            double weighted = 0.0, sq = 0.0;
            bool converged = true;
        };
        std::vector<RepOut> reps(spec.n_reps);
        parallel_for(spec.n_reps, [&](std::int64_t r) {
            std::uint64_t seed_r =
                mix_seed(spec.master_seed, (static_cast<std::uint64_t>(cell) << 24) | r);
            TrajectoryDataset ds = generate_dataset(*model, spec.theta_star, seed_r, m);
            if (baseline) {
                // the baseline estimator sees only the first transition
                for (auto& z : ds.trajectories) {
                    if (z.kind() == Trajectory::Kind::Tokens) {
                        z = Trajectory::tokens({z.token(0), z.token(1)});
                    } else {
                        Trajectory cut = Trajectory::reals(2, z.state_dim());
                        cut.state(0) = z.state(0);
                        cut.state(1) = z.state(1);
                        z = cut;
                    }
                }
                ds.horizon = 2;
            }
            MleResult fit;
            if (spec.estimator == Estimator::Discretized) {
                fit = mle_discretized(ds, *fit_model, *cover);
            } else {
                AscentConfig ac = spec.ascent;
                ac.start_seed = seed_r ^ 0x57A275ULL;
                fit = mle_continuous(ds, *fit_model, ac);
            }
            ParamVector th = fit_model->canonicalize(fit.theta_hat);
            Vector d = th - spec.theta_star;
            reps[r].weighted = ibar.quad_form(d);
            reps[r].sq = d.squaredNorm();
            reps[r].converged = fit.converged;
        });

        ExperimentRecord rec;
        rec.model_id = model->id() + (baseline ? ":baseline" : "");
        rec.m = m;
        rec.T = T;
        rec.n_reps = spec.n_reps;
        rec.master_seed = spec.master_seed;

        CellDiagnostics diag;
        diag.m = m;
        diag.T = T;
        std::vector<double> weighted(spec.n_reps);
        double sum_w = 0.0, sum_sq = 0.0;
        for (int r = 0; r < spec.n_reps; ++r) {
            weighted[r] = reps[r].weighted;
            sum_w += reps[r].weighted;
            sum_sq += reps[r].sq;
            diag.non_converged += reps[r].converged ? 0 : 1;
        }
        if (diag.non_converged * 10 > spec.n_reps) {
            std::ostringstream msg;
            msg << "run_scaling: cell (m=" << m << ", T=" << T << ") failed: "
                << diag.non_converged << "/" << spec.n_reps << " replicates did not converge";
            throw std::runtime_error(msg.str());
        }
        rec.mean_weighted_err = sum_w / spec.n_reps;
        rec.mean_sq_err = sum_sq / spec.n_reps;
        std::vector<double> sorted = weighted;
        std::sort(sorted.begin(), sorted.end());
        rec.median_weighted_err = spec.n_reps % 2
                                      ? sorted[spec.n_reps / 2]
                                      : 0.5 * (sorted[spec.n_reps / 2 - 1] +
                                               sorted[spec.n_reps / 2]);
        double ss = 0.0;
        for (double w : weighted) ss += (w - rec.mean_weighted_err) * (w - rec.mean_weighted_err);
        rec.se = spec.n_reps > 1
                     ? std::sqrt(ss / (spec.n_reps - 1.0) / spec.n_reps)
                     : 0.0;

        // localization predicate pass-rates on a replicate subsample
        int loc_runs = std::min(spec.localization_subsample, spec.n_reps);
        for (int r = 0; r < loc_runs; ++r) {
            std::uint64_t seed_r =
                mix_seed(spec.master_seed, (static_cast<std::uint64_t>(cell) << 24) | r);
            TrajectoryDataset ds = generate_dataset(*model, spec.theta_star, seed_r, m);
            LocalizationConfig lc = spec.loc;
            lc.seed = seed_r ^ 0x10CA11ULL;
            LocalizationReport lr = full_report(*model, ds, spec.theta_star, lc);
            ++diag.localized_runs;
            diag.radius_pass += lr.radius_ok ? 1 : 0;
            diag.fi_radius_pass += lr.fi_radius_ok ? 1 : 0;
        }

        if (spec.measure_time) {
            auto t1 = std::chrono::steady_clock::now();
            rec.wall_ms =
                std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        }
        out.records.push_back(std::move(rec));
        out.diagnostics.push_back(diag);
    }
    return out;
}

}  // namespace detail

inline ScalingResult run_scaling(const ScalingSpec& spec) { return detail::run_grid(spec, false); }

// same pipeline, but the estimator is fed only the first two states of every
// trajectory: one transition each, effective sample size m
inline ScalingResult baseline_iid(const ScalingSpec& spec) { return detail::run_grid(spec, true); }

// ---------------------------------------------------------------------------
// Log-log slope fit.

inline SlopeFit fit_slope(const std::vector<ExperimentRecord>& records, SlopeFit::Axis axis,
                          const std::function<double(const ExperimentRecord&)>& value =
                              [](const ExperimentRecord& r) { return r.mean_weighted_err; }) {
    std::vector<double> xs, ys;
    for (const auto& r : records) {
        double x = axis == SlopeFit::Axis::MT ? static_cast<double>(r.m) * r.T
                   : axis == SlopeFit::Axis::M ? static_cast<double>(r.m)
                                               : static_cast<double>(r.T);
        double y = value(r);
        if (!(x > 0.0) || !(y > 0.0))
            throw std::invalid_argument("fit_slope: needs positive axis values and errors");
        xs.push_back(std::log(x));
        ys.push_back(std::log(y));
    }
    std::vector<double> distinct = xs;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end(),
                               [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                   distinct.end());
    if (distinct.size() < 3)
        throw std::invalid_argument("fit_slope: need >= 3 distinct axis values");

    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    SlopeFit fit;
    fit.axis = axis;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
        ssr += e * e;
    }
    fit.stderr_slope = n > 2 ? std::sqrt(ssr / (n - 2.0) / sxx) : 0.0;
    fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------
// CSV with IEEE-754 round-trip formatting.

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline const char* kCsvHeader =
    "model_id,m,T,n_reps,mean_weighted_err,median_weighted_err,mean_sq_err,se,master_seed,wall_ms";

inline std::string format_csv(const std::vector<ExperimentRecord>& records) {
    std::ostringstream os;
    os << kCsvHeader << "\n";
    for (const auto& r : records) {
        os << r.model_id << ',' << r.m << ',' << r.T << ',' << r.n_reps << ','
           << format_double(r.mean_weighted_err) << ',' << format_double(r.median_weighted_err)
           << ',' << format_double(r.mean_sq_err) << ',' << format_double(r.se) << ','
           << r.master_seed << ',' << r.wall_ms << "\n";
    }
    return os.str();
}

inline void emit_csv(const std::vector<ExperimentRecord>& records, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("emit_csv: cannot open " + path);
    f << format_csv(records);
    if (!f) throw std::runtime_error("emit_csv: write failed for " + path);
}

inline std::vector<ExperimentRecord> parse_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader)
        throw std::runtime_error("parse_csv: bad header");
    std::vector<ExperimentRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (;;) {
            std::size_t pos = line.find(',', start);
            cols.push_back(line.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (cols.size() != 10) throw std::runtime_error("parse_csv: bad row: " + line);
        auto to_d = [](const std::string& s) {
            double v = 0.0;
            auto r = std::from_chars(s.data(), s.data() + s.size(), v);
            if (r.ec != std::errc()) throw std::runtime_error("parse_csv: bad number " + s);
            return v;
        };
        ExperimentRecord r;
        r.model_id = cols[0];
        r.m = std::stoi(cols[1]);
        r.T = std::stoi(cols[2]);
        r.n_reps = std::stoi(cols[3]);
        r.mean_weighted_err = to_d(cols[4]);
        r.median_weighted_err = to_d(cols[5]);
        r.mean_sq_err = to_d(cols[6]);
        r.se = to_d(cols[7]);
        r.master_seed = std::stoull(cols[8]);
        r.wall_ms = std::stol(cols[9]);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<ExperimentRecord> parse_csv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("parse_csv: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str());
}

// ---------------------------------------------------------------------------
// Minimal log-log SVG scatter (no external renderer).

inline std::string format_svg(const std::vector<ExperimentRecord>& records) {
    const double width = 640, height = 480, margin = 56;
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& r : records) {
        double x = std::log10(static_cast<double>(r.m) * r.T);
        double y = std::log10(std::max(r.mean_weighted_err, 1e-300));
        lo_x = std::min(lo_x, x);
        hi_x = std::max(hi_x, x);
        lo_y = std::min(lo_y, y);
        hi_y = std::max(hi_y, y);
    }
    if (records.empty()) {
        lo_x = 0;
        hi_x = 1;
        lo_y = 0;
        hi_y = 1;
    }
    if (hi_x - lo_x < 1e-9) hi_x = lo_x + 1;
    if (hi_y - lo_y < 1e-9) hi_y = lo_y + 1;
    auto px = [&](double x) { return margin + (x - lo_x) / (hi_x - lo_x) * (width - 2 * margin); };
    auto py = [&](double y) {
        return height - margin - (y - lo_y) / (hi_y - lo_y) * (height - 2 * margin);
    };
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n"
       << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
       << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
       << height - margin << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
       << "\" font-size=\"13\">log10(mT)</text>\n"
       << "<text x=\"12\" y=\"" << height / 2
       << "\" font-size=\"13\" transform=\"rotate(-90 12 " << height / 2
       << ")\">log10(weighted error)</text>\n";
    if (records.size() >= 3) {
        try {
            SlopeFit fit = fit_slope(records, SlopeFit::Axis::MT);
            // fitted line in natural logs; convert endpoints through log10
            double ln10 = std::log(10.0);
            double yA = (fit.intercept + fit.slope * lo_x * ln10) / ln10;
            double yB = (fit.intercept + fit.slope * hi_x * ln10) / ln10;
            os << "<line x1=\"" << px(lo_x) << "\" y1=\"" << py(yA) << "\" x2=\"" << px(hi_x)
               << "\" y2=\"" << py(yB) << "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";
        } catch (const std::exception&) {
            // degenerate spread: scatter only
        }
    }
    for (const auto& r : records) {
        double x = std::log10(static_cast<double>(r.m) * r.T);
        double y = std::log10(std::max(r.mean_weighted_err, 1e-300));
        os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y)
           << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void emit_svg(const std::vector<ExperimentRecord>& records, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("emit_svg: cannot open " + path);
    f << format_svg(records);
    if (!f) throw std::runtime_error("emit_svg: write failed for " + path);
}

}  // namespace helloc
