// helloc: config-driven simulation, fitting, divergence computation,
// localization reports, scaling experiments, and the self-verification suite.
//
// Exit codes: 0 success, 2 config error, 3 numerical non-convergence,
// 4 I/O error.

#include "helloc/config.hpp"
#include "helloc/divergences.hpp"
#include "helloc/estimation.hpp"
#include "helloc/harness.hpp"
#include "helloc/localization.hpp"
#include "helloc/trajectory_io.hpp"
#include "helloc/verify.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNonConvergence = 3;
constexpr int kExitIo = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;  // -1 = keep the config value
    int threads = 0;
};

helloc::RunConfig load_config(const CommonOpts& opts) {
    helloc::RunConfig cfg = helloc::RunConfig::parse_file(opts.config_path);
    if (opts.seed >= 0) cfg.override_value("seed", std::to_string(opts.seed));
    if (!opts.out_dir.empty()) cfg.override_value("out_dir", opts.out_dir);
    return cfg;
}

void apply_threads(const helloc::RunConfig* cfg, int cli_threads) {
    int n = cli_threads;
    if (n <= 0 && cfg) n = static_cast<int>(cfg->get_int("threads", 0));
    if (n <= 0) {
        if (const char* env = std::getenv("HELLOC_THREADS")) n = std::atoi(env);
    }
    helloc::set_worker_count(n > 0 ? n : 1);
}

std::string out_path(const helloc::RunConfig& cfg, const std::string& name) {
    std::string dir = cfg.get_string("out_dir", ".");
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / name).string();
}

helloc::ScalingSpec scaling_spec_from_config(const helloc::RunConfig& cfg,
                                             const helloc::ModelBundle& bundle) {
    helloc::ScalingSpec spec;
    spec.make_model = bundle.factory;
    spec.theta_star = bundle.theta_star;
    std::vector<int> grid_m = cfg.get_int_list("experiment.grid_m", {8, 32, 128});
    std::vector<int> grid_T = cfg.get_int_list("experiment.grid_T", {8, 32, 128});
    for (int m : grid_m)
        for (int T : grid_T) spec.grid.push_back({m, T});
    spec.n_reps = static_cast<int>(cfg.get_int("experiment.n_reps", 64));
    std::string est = cfg.get_string("experiment.estimator", "continuous");
    if (est == "continuous")
        spec.estimator = helloc::Estimator::Continuous;
    else if (est == "discretized")
        spec.estimator = helloc::Estimator::Discretized;
    else
        throw helloc::ConfigError("experiment.estimator must be continuous|discretized");
    spec.master_seed = cfg.get_u64("seed", 0);
    spec.delta = cfg.get_double("experiment.delta", 0.05);
    spec.measure_time = cfg.get_int("experiment.measure_time", 0) != 0;
    spec.localization_subsample =
        static_cast<int>(cfg.get_int("experiment.localize_subsample", 0));
    return spec;
}

int cmd_simulate(const CommonOpts& opts) {
    helloc::RunConfig cfg = load_config(opts);
    apply_threads(&cfg, opts.threads);
    helloc::ModelBundle bundle = helloc::build_model(cfg);
    int m = static_cast<int>(cfg.get_int("simulate.m"));
    helloc::TrajectoryDataset ds =
        helloc::generate_dataset(*bundle.model, bundle.theta_star, cfg.get_u64("seed", 0), m);
    std::string path = out_path(cfg, bundle.family + "_trajectories.txt");
    helloc::write_trajectories(ds, path);
    std::cout << "wrote " << m << " trajectories (T=" << bundle.model->horizon() << ") to "
              << path << "\n";
    return kExitOk;
}

int cmd_fit(const CommonOpts& opts) {
    helloc::RunConfig cfg = load_config(opts);
    apply_threads(&cfg, opts.threads);
    helloc::ModelBundle bundle = helloc::build_model(cfg);

    helloc::TrajectoryDataset ds;
    if (cfg.has("fit.data")) {
        ds = helloc::read_trajectories(cfg.get_string("fit.data"));
        if (ds.horizon != bundle.model->horizon())
            throw helloc::ConfigError("fit.data horizon does not match the configured model");
    } else {
        int m = static_cast<int>(cfg.get_int("fit.m", 100));
        ds = helloc::generate_dataset(*bundle.model, bundle.theta_star, cfg.get_u64("seed", 0),
                                      m);
    }

    std::string est = cfg.get_string("fit.estimator", "continuous");
    helloc::MleResult fit;
    if (est == "discretized") {
        double delta = cfg.get_double("experiment.delta", 0.05);
        std::string eps_key = cfg.get_string("fit.epsilon", "auto");
        double eps = eps_key == "auto" ? helloc::epsilon_rule(delta, ds.size())
                                       : std::stod(eps_key);
        helloc::FisherMatrix imax =
            bundle.model->has_analytic_fisher()
                ? bundle.model->fisher(bundle.model->domain().center())
                : helloc::fisher_mc(*bundle.model, bundle.theta_star, 2000,
                                    helloc::derive_stream(cfg.get_u64("seed", 0), 0xF1));
        helloc::CoverSet cover = helloc::build_cover(bundle.model->domain(), imax, eps);
        fit = helloc::mle_discretized(ds, *bundle.model, cover);
    } else if (est == "continuous") {
        helloc::AscentConfig ac;
        ac.start_seed = cfg.get_u64("seed", 0) ^ 0x57A275ULL;
        fit = helloc::mle_continuous(ds, *bundle.model, ac);
    } else {
        throw helloc::ConfigError("fit.estimator must be continuous|discretized");
    }

    helloc::ParamVector th = bundle.model->canonicalize(fit.theta_hat);
    std::cout << "theta_hat";
    for (int i = 0; i < th.size(); ++i) std::cout << " " << helloc::format_double(th[i]);
    std::cout << "\nloglik " << helloc::format_double(fit.loglik) << "\nmethod "
              << (fit.method == helloc::MleResult::Method::Discretized ? "discretized"
                                                                       : "continuous")
              << "\nconverged " << (fit.converged ? 1 : 0) << "\nepsilon "
              << helloc::format_double(fit.epsilon) << "\n";

    std::string path = out_path(cfg, bundle.family + "_fit.txt");
    {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + path);
        f << "theta_hat";
        for (int i = 0; i < th.size(); ++i) f << " " << helloc::format_double(th[i]);
        f << "\nloglik " << helloc::format_double(fit.loglik) << "\nconverged "
          << (fit.converged ? 1 : 0) << "\n";
    }
    return fit.converged ? kExitOk : kExitNonConvergence;
}

int cmd_scaling(const CommonOpts& opts) {
    helloc::RunConfig cfg = load_config(opts);
    apply_threads(&cfg, opts.threads);
    helloc::ModelBundle bundle = helloc::build_model(cfg);
    helloc::ScalingSpec spec = scaling_spec_from_config(cfg, bundle);

    bool baseline = cfg.get_int("experiment.baseline", 0) != 0;
    helloc::ScalingResult res =
        baseline ? helloc::baseline_iid(spec) : helloc::run_scaling(spec);

    std::string stem = bundle.family + (baseline ? "_baseline" : "") + "_scaling";
    helloc::emit_csv(res.records, out_path(cfg, stem + ".csv"));
    helloc::emit_svg(res.records, out_path(cfg, stem + ".svg"));

    helloc::SlopeFit fit = helloc::fit_slope(res.records, helloc::SlopeFit::Axis::MT);
    std::cout << "cells " << res.records.size() << "\nslope_vs_mT "
              << helloc::format_double(fit.slope) << " +- "
              << helloc::format_double(fit.stderr_slope) << " (r2 "
              << helloc::format_double(fit.r2) << ")\n";
    for (const auto& d : res.diagnostics) {
        if (d.localized_runs > 0)
            std::cout << "cell m=" << d.m << " T=" << d.T << " radius_pass " << d.radius_pass
                      << "/" << d.localized_runs << " fi_radius_pass " << d.fi_radius_pass << "/"
                      << d.localized_runs << "\n";
        if (d.non_converged > 0)
            std::cout << "cell m=" << d.m << " T=" << d.T << " non_converged "
                      << d.non_converged << "\n";
    }
    std::cout << "wrote " << out_path(cfg, stem + ".csv") << "\n";
    return kExitOk;
}

int cmd_localize(const CommonOpts& opts) {
    helloc::RunConfig cfg = load_config(opts);
    apply_threads(&cfg, opts.threads);
    helloc::ModelBundle bundle = helloc::build_model(cfg);

    int m = static_cast<int>(cfg.get_int("localize.m", 200));
    helloc::TrajectoryDataset ds =
        helloc::generate_dataset(*bundle.model, bundle.theta_star, cfg.get_u64("seed", 0), m);

    helloc::LocalizationConfig lc;
    lc.n_s = static_cast<int>(cfg.get_int("localize.n_s", 17));
    lc.n_dirs = static_cast<int>(cfg.get_int("localize.n_dirs", 256));
    lc.n_mc = static_cast<int>(cfg.get_int("localize.n_mc", 4096));
    lc.n_quad = static_cast<int>(cfg.get_int("localize.n_quad", 64));
    lc.fisher_mc_n = static_cast<int>(cfg.get_int("localize.fisher_mc_n", 2000));
    lc.use_discretized_mle = cfg.get_string("localize.estimator", "continuous") == "discretized";
    lc.delta = cfg.get_double("experiment.delta", 0.05);
    lc.seed = cfg.get_u64("seed", 0);

    helloc::LocalizationReport rep =
        helloc::full_report(*bundle.model, ds, bundle.theta_star, lc);
    std::string text = helloc::format_report(rep);
    std::cout << text;
    std::string path = out_path(cfg, bundle.family + "_localization.txt");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << text;
    return kExitOk;
}

int cmd_hellinger(const CommonOpts& opts, const std::string& model_flag, double theta0_flag,
                  double theta1_flag, int t_flag) {
    // flag form: two-state tensorized value without a config file
    if (!model_flag.empty()) {
        if (model_flag != "two_state")
            throw helloc::ConfigError("hellinger --model supports two_state; use a config file "
                                      "for other families");
        helloc::DivergenceEstimate est =
            helloc::hellinger_sq_two_state(theta0_flag, theta1_flag, t_flag);
        std::cout << "hellinger_sq " << helloc::format_double(est.value) << "\nmethod tensorized"
                  << "\n";
        return kExitOk;
    }
    helloc::RunConfig cfg = load_config(opts);
    apply_threads(&cfg, opts.threads);
    helloc::ModelBundle bundle = helloc::build_model(cfg);
    std::vector<double> t0 = cfg.get_list("hellinger.theta0");
    std::vector<double> t1 = cfg.get_list("hellinger.theta1");
    helloc::Vector a(static_cast<int>(t0.size())), b(static_cast<int>(t1.size()));
    for (std::size_t i = 0; i < t0.size(); ++i) a[static_cast<int>(i)] = t0[i];
    for (std::size_t i = 0; i < t1.size(); ++i) b[static_cast<int>(i)] = t1[i];

    std::string method = cfg.get_string("hellinger.method", "auto");
    helloc::DivergenceEstimate est;
    if ((method == "auto" && bundle.model->has_closed_form_hellinger()) ||
        method == "closed_form") {
        est.value = bundle.model->hellinger_sq_closed_form(a, b);
        est.method = helloc::DivergenceEstimate::Method::Tensorized;
    } else {
        int n = static_cast<int>(cfg.get_int("hellinger.n", 100000));
        est = helloc::hellinger_sq_mc(*bundle.model, a, b, n,
                                      helloc::derive_stream(cfg.get_u64("seed", 0), 0x4853ULL));
    }
    std::cout << "hellinger_sq " << helloc::format_double(est.value) << "\nstd_error "
              << helloc::format_double(est.std_error) << "\nmethod "
              << (est.method == helloc::DivergenceEstimate::Method::MonteCarlo ? "monte-carlo"
                                                                               : "closed-form")
              << "\n";
    return kExitOk;
}

int cmd_verify(const std::vector<std::string>& modules, int threads) {
    apply_threads(nullptr, threads);
    auto all = helloc::verify::suites();
    std::vector<std::string> selected = modules;
    if (selected.empty())
        for (const auto& [name, fn] : all) selected.push_back(name);
    int failures = 0;
    for (const auto& name : selected) {
        auto it = all.find(name);
        if (it == all.end()) {
            std::cerr << "unknown verify suite '" << name << "'\n";
            return kExitConfig;
        }
        helloc::verify::Suite suite = it->second();
        for (const auto& check : suite) {
            std::cout << (check.pass ? "[PASS] " : "[FAIL] ") << name << ": " << check.name;
            if (!check.detail.empty()) std::cout << " (" << check.detail << ")";
            std::cout << "\n";
            failures += check.pass ? 0 : 1;
        }
    }
    std::cout << (failures == 0 ? "all checks passed" : "FAILURES: " + std::to_string(failures))
              << "\n";
    return failures == 0 ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-trajectory MLE laboratory"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::vector<std::string> verify_modules;
    std::string hl_model;
    double hl_theta0 = 0.2, hl_theta1 = 0.8;
    int hl_T = 3;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        sub->add_option("--config", opts.config_path, "run configuration file")
            ->required(config_required);
        sub->add_option("--seed", opts.seed, "override the config seed");
        sub->add_option("--threads", opts.threads,
                        "worker threads (fallback: HELLOC_THREADS, then 1)");
        sub->add_option("--out-dir", opts.out_dir, "override the config output directory");
    };

    CLI::App* sim = app.add_subcommand("simulate", "sample trajectories to a text file");
    add_common(sim, true);
    CLI::App* fit = app.add_subcommand("fit", "maximum-likelihood fit");
    add_common(fit, true);
    CLI::App* scaling = app.add_subcommand("scaling", "run an (m, T) scaling grid");
    add_common(scaling, true);
    CLI::App* localize = app.add_subcommand("localize", "Hellinger-localization report");
    add_common(localize, true);
    CLI::App* hellinger = app.add_subcommand("hellinger", "divergence between two parameters");
    add_common(hellinger, false);
    hellinger->add_option("--model", hl_model, "two_state for the tensorized closed form");
    hellinger->add_option("--theta0", hl_theta0, "first parameter (flag form)");
    hellinger->add_option("--theta1", hl_theta1, "second parameter (flag form)");
    hellinger->add_option("--T", hl_T, "trajectory length (flag form)");
    CLI::App* verify = app.add_subcommand("verify", "run module invariant suites");
    verify->add_option("modules", verify_modules,
                       "suites to run (default: all): core divergences models_markov "
                       "models_dynamics estimation localization harness");
    verify->add_option("--threads", opts.threads, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(opts);
        if (fit->parsed()) return cmd_fit(opts);
        if (scaling->parsed()) return cmd_scaling(opts);
        if (localize->parsed()) return cmd_localize(opts);
        if (hellinger->parsed())
            return cmd_hellinger(opts, hl_model, hl_theta0, hl_theta1, hl_T);
        if (verify->parsed()) return cmd_verify(verify_modules, opts.threads);
    } catch (const helloc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::cerr << "error: " << msg << "\n";
        if (msg.find("cannot open") != std::string::npos ||
            msg.find("write failed") != std::string::npos)
            return kExitIo;
        if (msg.find("converge") != std::string::npos) return kExitNonConvergence;
        return 1;
    }
    return kExitOk;
}
