// config.hpp - flat `key = value` run configuration with dotted sections,
// strict unknown-key rejection, and builders for every solver input
// (grid, model, gamma, initial-data presets, controls, cost, optimizer).
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "chks/control.hpp"
#include "chks/grid.hpp"
#include "chks/model.hpp"
#include "chks/state.hpp"

namespace chks {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // grid
    int nx = 64, ny = 64;
    double lx = 1.0, ly = 1.0;
    // model
    ModelParams model;
    // gamma
    std::string gamma_kind = "tanh";
    double gamma_a = 0.5, gamma_b_phi = 1.0, gamma_b_sigma = 1.0, gamma_shift = 0.0;
    // initial data
    std::string init_preset = "bump";   // uniform | bump | seeded-noise | files
    double init_phi0 = 0.0, init_sigma0 = 0.5;
    std::string init_phi0_file, init_sigma0_file;
    double delta_init = 1e-3;
    // control source for simulate / optimizer start
    std::string control_source = "zero";   // zero | constant | files
    double control_value = 0.0;
    std::string control_dir;
    // cost
    std::array<double, 5> alpha{1.0, 1.0, 1.0, 1.0, 1e-4};
    double u_min = -0.5, u_max = 0.5;
    // targets for optimize
    std::string targets_mode = "synthesize";   // synthesize | files
    std::string targets_u_preset = "bump";     // bump | constant
    double targets_u_scale = 0.3;
    std::string targets_dir;
    // optimizer
    OptimizerConfig opt;
    // output
    std::string output_dir = "out";
    std::string output_name = "run";
    int stride = 1;
    bool save_adjoint = false;
    uint64_t seed = 12345;

    Grid2D make_grid() const { return Grid2D(nx, ny, lx, ly); }

    GammaSource make_gamma() const {
        if (gamma_kind == "tanh")
            return GammaSource::tanh_default(gamma_a);
        if (gamma_kind == "custom")
            return GammaSource::custom(gamma_a, gamma_b_phi, gamma_b_sigma, gamma_shift);
        throw ConfigError("gamma.kind must be tanh or custom");
    }

    LogPotential make_potential() const { return LogPotential(model.c0); }

    InitialData make_initial(const Grid2D& g) const {
        InitialData init;
        init.delta_init = delta_init;
        constexpr double pi = 3.14159265358979323846;
        if (init_preset == "uniform") {
            init.phi0 = Field(g, init_phi0);
            init.sigma0 = Field(g, init_sigma0);
        } else if (init_preset == "bump") {
            init.phi0 = Field(g);
            init.sigma0 = Field(g);
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    init.phi0(i, j) = 0.5 * std::cos(pi * g.x(i) / g.lx) * std::cos(pi * g.y(j) / g.ly);
                    init.sigma0(i, j) = 0.5 + 0.25 * std::cos(pi * g.x(i) / g.lx);
                }
        } else if (init_preset == "seeded-noise") {
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> dphi(-1.0, 1.0), dsig(0.0, 1.0);
            init.phi0 = Field(g);
            init.sigma0 = Field(g);
            for (int k = 0; k < g.n(); ++k) {
                init.phi0[k] = dphi(rng);
                init.sigma0[k] = dsig(rng);
            }
            smooth(init.phi0, 10);
            smooth(init.sigma0, 10);
            const double amp = linf_norm(init.phi0);
            if (amp > 0.0) scale(init.phi0, 0.5 / amp);
            for (int k = 0; k < g.n(); ++k)
                init.sigma0[k] = std::max(0.0, init.sigma0[k]);
        } else if (init_preset == "files") {
            if (init_phi0_file.empty() || init_sigma0_file.empty())
                throw ConfigError("init.preset=files requires init.phi0_file and init.sigma0_file");
            init.phi0 = read_chks1(init_phi0_file, g);
            init.sigma0 = read_chks1(init_sigma0_file, g);
        } else {
            throw ConfigError("init.preset must be uniform, bump, seeded-noise or files");
        }
        init.validate();
        return init;
    }

    ControlSeq make_control(const Grid2D& g) const {
        if (control_source == "zero")
            return constant_control(g, model.nt, 0.0);
        if (control_source == "constant")
            return constant_control(g, model.nt, control_value);
        if (control_source == "files") {
            if (control_dir.empty())
                throw ConfigError("control.source=files requires control.dir");
            ControlSeq u;
            u.reserve(model.nt);
            for (int n = 0; n < model.nt; ++n)
                u.push_back(read_chks1(control_dir + "/u_" + std::to_string(n) + ".chks1", g));
            return u;
        }
        throw ConfigError("control.source must be zero, constant or files");
    }

    // reference control for synthesized tracking targets
    ControlSeq make_target_control(const Grid2D& g) const {
        constexpr double pi = 3.14159265358979323846;
        if (targets_u_preset == "constant")
            return constant_control(g, model.nt, targets_u_scale);
        if (targets_u_preset == "bump") {
            Field f(g);
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i)
                    f(i, j) = targets_u_scale * std::cos(pi * g.x(i) / g.lx) *
                              std::cos(pi * g.y(j) / g.ly);
            return ControlSeq(static_cast<size_t>(model.nt), f);
        }
        throw ConfigError("targets.u_preset must be bump or constant");
    }

    ControlSeq bounds_lo(const Grid2D& g) const { return constant_control(g, model.nt, u_min); }
    ControlSeq bounds_hi(const Grid2D& g) const { return constant_control(g, model.nt, u_max); }

    ControlProblem make_problem_from_files(const Grid2D& g) const {
        if (targets_dir.empty())
            throw ConfigError("targets.mode=files requires targets.dir");
        ControlProblem prob;
        prob.alpha = alpha;
        prob.phi_target_q.reserve(model.nt);
        prob.sigma_target_q.reserve(model.nt);
        for (int n = 0; n < model.nt; ++n) {
            prob.phi_target_q.push_back(read_chks1(targets_dir + "/phiQ_" + std::to_string(n) + ".chks1", g));
            prob.sigma_target_q.push_back(read_chks1(targets_dir + "/sigmaQ_" + std::to_string(n) + ".chks1", g));
        }
        prob.phi_target_omega = read_chks1(targets_dir + "/phiOmega.chks1", g);
        prob.sigma_target_omega = read_chks1(targets_dir + "/sigmaOmega.chks1", g);
        prob.u_min = bounds_lo(g);
        prob.u_max = bounds_hi(g);
        return prob;
    }

private:
    static void smooth(Field& f, int passes) {
        const Grid2D& g = f.grid();
        Field tmp(g);
        for (int p = 0; p < passes; ++p) {
            for (int j = 0; j < g.ny; ++j) {
                const int jm = (j == 0) ? 1 : j - 1;
                const int jp = (j == g.ny - 1) ? g.ny - 2 : j + 1;
                for (int i = 0; i < g.nx; ++i) {
                    const int im = (i == 0) ? 1 : i - 1;
                    const int ip = (i == g.nx - 1) ? g.nx - 2 : i + 1;
                    tmp(i, j) = 0.5 * f(i, j) +
                                0.125 * (f(im, j) + f(ip, j) + f(i, jm) + f(i, jp));
                }
            }
            std::swap(f, tmp);
        }
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

struct KvParser {
    std::map<std::string, std::string> kv;
    std::set<std::string> consumed;

    void take(std::map<std::string, std::string> raw) { kv = std::move(raw); }

    bool has(const std::string& key) const { return kv.count(key) > 0; }

    template <class T>
    void get(const std::string& key, T& out) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        consumed.insert(key);
        std::istringstream is(it->second);
        T v{};
        is >> v;
        if (is.fail())
            throw ConfigError("invalid value for " + key + ": '" + it->second + "'");
        std::string rest;
        is >> rest;
        if (!rest.empty())
            throw ConfigError("trailing characters in value for " + key);
        out = v;
    }

    void get(const std::string& key, std::string& out) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        consumed.insert(key);
        out = it->second;
    }

    void get_bool(const std::string& key, bool& out) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        consumed.insert(key);
        const std::string& v = it->second;
        if (v == "true" || v == "1") out = true;
        else if (v == "false" || v == "0") out = false;
        else throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv)
            if (!consumed.count(key))
                throw ConfigError("unknown config key: " + key);
    }
};

} // namespace detail

inline RunConfig parse_config_text(std::istream& is, const std::string& origin) {
    std::map<std::string, std::string> raw;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
        if (raw.count(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
        raw[key] = value;
    }

    RunConfig cfg;
    detail::KvParser p;
    p.take(std::move(raw));

    p.get("grid.nx", cfg.nx);
    p.get("grid.ny", cfg.ny);
    p.get("grid.lx", cfg.lx);
    p.get("grid.ly", cfg.ly);

    p.get("model.tau", cfg.model.tau);
    p.get("model.m", cfg.model.m);
    p.get("model.c0", cfg.model.c0);
    p.get("model.T", cfg.model.T);
    p.get("model.nt", cfg.model.nt);
    p.get("model.newton_tol", cfg.model.newton_tol);
    p.get("model.newton_max_iter", cfg.model.newton_max_iter);
    p.get("model.cg_tol", cfg.model.cg_tol);
    p.get("model.cg_max_iter", cfg.model.cg_max_iter);
    p.get("model.u_cap", cfg.model.u_cap);

    p.get("gamma.kind", cfg.gamma_kind);
    p.get("gamma.a", cfg.gamma_a);
    p.get("gamma.b_phi", cfg.gamma_b_phi);
    p.get("gamma.b_sigma", cfg.gamma_b_sigma);
    p.get("gamma.shift", cfg.gamma_shift);

    p.get("init.preset", cfg.init_preset);
    p.get("init.phi0", cfg.init_phi0);
    p.get("init.sigma0", cfg.init_sigma0);
    p.get("init.phi0_file", cfg.init_phi0_file);
    p.get("init.sigma0_file", cfg.init_sigma0_file);
    p.get("init.delta_init", cfg.delta_init);

    p.get("control.source", cfg.control_source);
    p.get("control.value", cfg.control_value);
    p.get("control.dir", cfg.control_dir);

    p.get("cost.alpha1", cfg.alpha[0]);
    p.get("cost.alpha2", cfg.alpha[1]);
    p.get("cost.alpha3", cfg.alpha[2]);
    p.get("cost.alpha4", cfg.alpha[3]);
    p.get("cost.alpha5", cfg.alpha[4]);
    p.get("cost.u_min", cfg.u_min);
    p.get("cost.u_max", cfg.u_max);

    p.get("targets.mode", cfg.targets_mode);
    p.get("targets.u_preset", cfg.targets_u_preset);
    p.get("targets.u_scale", cfg.targets_u_scale);
    p.get("targets.dir", cfg.targets_dir);

    p.get("opt.max_outer_iters", cfg.opt.max_outer_iters);
    p.get("opt.armijo_c1", cfg.opt.armijo_c1);
    p.get("opt.armijo_shrink", cfg.opt.armijo_shrink);
    p.get("opt.initial_step", cfg.opt.initial_step);
    p.get("opt.stationarity_tol", cfg.opt.stationarity_tol);
    p.get("opt.min_step", cfg.opt.min_step);

    p.get("output.dir", cfg.output_dir);
    p.get("output.name", cfg.output_name);
    p.get("output.stride", cfg.stride);
    p.get_bool("output.save_adjoint", cfg.save_adjoint);
    p.get("seed", cfg.seed);

    p.reject_unknown();

    // structural validation before any solve starts
    try {
        cfg.model.validate();
        (void)cfg.make_grid();
        cfg.make_gamma().validate_against(cfg.model.m);
        cfg.opt.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (cfg.u_min > cfg.u_max)
        throw ConfigError("cost.u_min must be <= cost.u_max");
    if (cfg.stride < 1)
        throw ConfigError("output.stride must be >= 1");
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return parse_config_text(is, path);
}

} // namespace chks
