#pragma once

// Nested key:value run configuration with strict key checking, plus the
// model factory that turns a config into a ModelSpec + true parameter.

#include "helloc/core.hpp"
#include "helloc/models/attention.hpp"
#include "helloc/models/mixture.hpp"
#include "helloc/models/regression.hpp"
#include "helloc/models/sin_glm.hpp"
#include "helloc/models/two_state.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace helloc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class RunConfig {
public:
    // Accepts two-space-indented sections and/or dotted keys:
    //   experiment:
    //     n_reps: 64
    // is the same as "experiment.n_reps: 64".
    static RunConfig parse(const std::string& text) {
        RunConfig cfg;
        std::istringstream is(text);
        std::string line;
        std::vector<std::string> stack;  // section names per indent level
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::size_t first = line.find_first_not_of(' ');
            if (first == std::string::npos) continue;
            if (line[first] == '#') continue;
            if (first % 2 != 0)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": indentation must be multiples of two spaces");
            std::size_t level = first / 2;
            if (level > stack.size())
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": indentation jumps a level");
            stack.resize(level);
            std::size_t colon = line.find(':', first);
            if (colon == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected 'key: value'");
            std::string key = trim(line.substr(first, colon - first));
            std::string value = trim(line.substr(colon + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            if (value.empty()) {
                stack.push_back(key);
                continue;
            }
            std::string path;
            for (const auto& s : stack) path += s + ".";
            path += key;
            if (cfg.values_.count(path))
                throw ConfigError("config: duplicate key '" + path + "'");
            cfg.values_[path] = value;
        }
        cfg.check_known_keys();
        return cfg;
    }

    static RunConfig parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("config: cannot open " + path);
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
        return it->second;
    }
    std::string get_string(const std::string& key, const std::string& dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double dflt) const {
        return has(key) ? get_double(key) : dflt;
    }
    long long get_int(const std::string& key) const {
        return static_cast<long long>(to_double(key, get_string(key)));
    }
    long long get_int(const std::string& key, long long dflt) const {
        return has(key) ? get_int(key) : dflt;
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const {
        if (!has(key)) return dflt;
        return std::stoull(get_string(key));
    }

    std::vector<double> get_list(const std::string& key) const {
        std::istringstream is(get_string(key));
        std::vector<double> out;
        std::string tok;
        while (is >> tok) out.push_back(to_double(key, tok));
        if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
        return out;
    }
    std::vector<double> get_list(const std::string& key, std::vector<double> dflt) const {
        return has(key) ? get_list(key) : dflt;
    }
    std::vector<int> get_int_list(const std::string& key, std::vector<int> dflt) const {
        if (!has(key)) return dflt;
        std::vector<int> out;
        for (double v : get_list(key)) out.push_back(static_cast<int>(v));
        return out;
    }

    void override_value(const std::string& key, const std::string& value) {
        values_[key] = value;
        known_check_done_ = false;
        check_known_keys();
    }

private:
    static std::string trim(std::string s) {
        std::size_t a = s.find_first_not_of(" \t");
        std::size_t b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    }
    static double to_double(const std::string& key, const std::string& s) {
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument("trailing chars");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' has non-numeric value '" + s + "'");
        }
    }

    void check_known_keys() const {
        static const std::set<std::string> known = {
            "model", "seed", "out_dir", "threads",
            // two-state chain
            "two_state.theta_star", "two_state.mu", "two_state.T", "two_state.rho1",
            // mixture
            "mixture.theta_star", "mixture.mu", "mixture.T",
            // regression
            "regression.d", "regression.T", "regression.R", "regression.feature_map",
            "regression.theta_star", "regression.noise.kind", "regression.noise.nu",
            "regression.noise.c",
            // sinusoidal GLM
            "sin_glm.d", "sin_glm.T", "sin_glm.R", "sin_glm.sigma", "sin_glm.theta_star",
            // attention
            "attention.K", "attention.d", "attention.T", "attention.R",
            "attention.embed_seed", "attention.c_opnorm", "attention.theta_star",
            // commands
            "simulate.m",
            "fit.m", "fit.data", "fit.estimator", "fit.epsilon",
            "experiment.grid_m", "experiment.grid_T", "experiment.n_reps",
            "experiment.estimator", "experiment.delta", "experiment.baseline",
            "experiment.measure_time", "experiment.localize_subsample",
            "localize.m", "localize.n_s", "localize.n_dirs", "localize.n_mc",
            "localize.n_quad", "localize.fisher_mc_n", "localize.estimator",
            "hellinger.theta0", "hellinger.theta1", "hellinger.n", "hellinger.method",
        };
        if (known_check_done_) return;
        for (const auto& [k, v] : values_) {
            if (!known.count(k))
                throw ConfigError("config: unknown key '" + k + "'");
        }
        known_check_done_ = true;
    }

    std::map<std::string, std::string> values_;
    mutable bool known_check_done_ = false;
};

// ---------------------------------------------------------------------------
// Model construction.

struct ModelBundle {
    std::unique_ptr<ModelSpec> model;
    ParamVector theta_star;
    std::string family;
    // rebuilds the same family at a different horizon (scaling grids)
    std::function<std::unique_ptr<ModelSpec>(int)> factory;
};

inline ModelBundle build_model(const RunConfig& cfg, int horizon_override = 0) {
    ModelBundle out;
    out.family = cfg.get_string("model");
    auto as_vec = [](const std::vector<double>& v) {
        Vector x(static_cast<int>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<int>(i)] = v[i];
        return x;
    };

    if (out.family == "two_state") {
        double mu = cfg.get_double("two_state.mu", 0.05);
        int T = horizon_override ? horizon_override : static_cast<int>(cfg.get_int("two_state.T"));
        double rho1 = cfg.get_double("two_state.rho1", 0.5);
        out.theta_star = as_vec({cfg.get_double("two_state.theta_star")});
        out.factory = [mu, rho1](int t) {
            return std::make_unique<TwoStateModel>(mu, t, rho1);
        };
        out.model = out.factory(T);
    } else if (out.family == "mixture") {
        double mu = cfg.get_double("mixture.mu", 0.05);
        int T = horizon_override ? horizon_override : static_cast<int>(cfg.get_int("mixture.T"));
        std::vector<double> ts = cfg.get_list("mixture.theta_star");
        if (ts.size() != 2) throw ConfigError("mixture.theta_star needs two entries");
        out.theta_star = as_vec(ts);
        out.factory = [mu](int t) { return std::make_unique<MixtureModel>(mu, t); };
        out.model = out.factory(T);
    } else if (out.family == "regression") {
        int d = static_cast<int>(cfg.get_int("regression.d"));
        int T = horizon_override ? horizon_override : static_cast<int>(cfg.get_int("regression.T"));
        double radius = cfg.get_double("regression.R", 2.0);
        std::string map = cfg.get_string("regression.feature_map", "lds");
        std::string kind = cfg.get_string("regression.noise.kind");
        double nu = cfg.get_double("regression.noise.nu", 1.0);
        double c = cfg.get_double("regression.noise.c", 5.0);
        NoiseKind nk;
        if (kind == "gaussian")
            nk = NoiseKind::Gaussian;
        else if (kind == "bang_bang")
            nk = NoiseKind::BangBang;
        else if (kind == "smoothed_laplace")
            nk = NoiseKind::SmoothedLaplace;
        else
            throw ConfigError("regression.noise.kind must be gaussian|bang_bang|smoothed_laplace");
        std::vector<double> ts = cfg.get_list("regression.theta_star");
        if (static_cast<int>(ts.size()) != d * d)
            throw ConfigError("regression.theta_star needs d*d entries");
        out.theta_star = as_vec(ts);
        if (map != "lds" && map != "bounded_sin")
            throw ConfigError("regression.feature_map must be lds|bounded_sin");
        out.factory = [d, radius, map, nk, nu, c](int t) {
            NoiseFamily noise = make_noise(nk, nu, c);
            return std::make_unique<RegressionModel>(
                map == "lds" ? RegressionModel::lds(d, t, std::move(noise), radius)
                             : RegressionModel::bounded_sin(d, t, std::move(noise), radius));
        };
        out.model = out.factory(T);
    } else if (out.family == "sin_glm") {
        int d = static_cast<int>(cfg.get_int("sin_glm.d"));
        int T = horizon_override ? horizon_override : static_cast<int>(cfg.get_int("sin_glm.T"));
        double sigma = cfg.get_double("sin_glm.sigma", 1.0);
        double radius = cfg.get_double("sin_glm.R", 2.0);
        std::vector<double> ts = cfg.get_list("sin_glm.theta_star");
        if (static_cast<int>(ts.size()) != d * d)
            throw ConfigError("sin_glm.theta_star needs d*d entries");
        out.theta_star = as_vec(ts);
        out.factory = [d, sigma, radius](int t) {
            return std::make_unique<SinGlmModel>(d, sigma, t, radius);
        };
        out.model = out.factory(T);
    } else if (out.family == "attention") {
        int k = static_cast<int>(cfg.get_int("attention.K"));
        int d = static_cast<int>(cfg.get_int("attention.d"));
        int T = horizon_override ? horizon_override : static_cast<int>(cfg.get_int("attention.T"));
        double radius = cfg.get_double("attention.R", 1.0);
        std::uint64_t es = cfg.get_u64("attention.embed_seed", 7);
        double cop = cfg.get_double("attention.c_opnorm", 1.0);
        std::vector<double> ts = cfg.get_list("attention.theta_star");
        if (static_cast<int>(ts.size()) != d * d)
            throw ConfigError("attention.theta_star needs d*d entries");
        out.theta_star = as_vec(ts);
        out.factory = [k, d, radius, es, cop](int t) {
            return std::make_unique<AttentionModel>(AttentionModel::random(k, d, t, radius, es,
                                                                           cop));
        };
        out.model = out.factory(T);
    } else {
        throw ConfigError("model must be two_state|mixture|regression|sin_glm|attention");
    }
    if (!out.model->domain().contains(out.theta_star))
        throw ConfigError("theta_star lies outside the parameter domain");
    return out;
}

}  // namespace helloc
