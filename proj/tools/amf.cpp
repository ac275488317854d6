// Command-line front end: simulate, solve-fpe, fixed-point, chaos-sweep, validate.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "amf/csv.hpp"
#include "amf/fpe.hpp"
#include "amf/harness.hpp"
#include "amf/meanfield.hpp"
#include "amf/particle.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kValidationFailure = 2;
constexpr int kConfigError = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    unsigned threads = 1;
    std::string level = "fast";
};

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string dir_of(const std::string& path) {
    const auto p = fs::path(path).parent_path();
    return p.empty() ? "." : p.string();
}

void write_manifest(const std::string& dir, const nlohmann::json& config, std::uint64_t seed,
                    const nlohmann::json& extra = nlohmann::json::object()) {
    auto m = amf::make_manifest(config, seed);
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    auto out = amf::csv::open_out(dir + "/manifest.json");
    out << m.dump(2) << '\n';
}

void write_paths_csv(const amf::ParticlePaths& paths, const std::string& file) {
    auto out = amf::csv::open_out(file);
    out << 't';
    for (std::size_t i = 0; i < paths.n(); ++i) out << ",p" << i;
    out << '\n';
    for (auto k : paths.recorded_steps) {
        out << amf::csv::fmt(paths.time_grid().at(k));
        for (double x : paths.at_step(k)) out << ',' << amf::csv::fmt(x);
        out << '\n';
    }
}

void write_flux_csv(const amf::DensityFlow& flow, const std::string& file) {
    auto out = amf::csv::open_out(file);
    out << "t,minus_dx_p_at_0\n";
    for (std::size_t k = 1; k < flow.time.size(); ++k) {
        out << amf::csv::fmt(flow.time.at(k)) << ',' << amf::csv::fmt(amf::boundary_flux(flow, k)) << '\n';
    }
}

int run_simulate(const Globals& g, const std::string& config_path, bool with_paths) {
    const auto j = read_json(config_path);
    amf::SimConfig c;
    try {
        c = amf::sim_config_from_json(j, dir_of(config_path));
        if (g.seed) c.seed = *g.seed;
        c.threads = g.threads;
        if (!with_paths) c.record_steps = {c.n_steps};
        c.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    const auto paths = amf::simulate(c);
    fs::create_directories(g.out);
    amf::write_samples_csv(paths.terminal(), g.out + "/terminal_samples.csv");
    amf::write_survival_csv(c.time_grid(), paths.survival(), g.out + "/survival.csv");
    if (with_paths) write_paths_csv(paths, g.out + "/paths.csv");
    write_manifest(g.out, amf::to_json(c), c.seed, {{"max_abs_drift", paths.max_abs_drift}});
    std::printf("simulated %zu particles over %zu steps; survival at T = %.6f\n", c.n_particles, c.n_steps,
                paths.survival().back());
    return 0;
}

amf::KernelSpec load_kernel(const std::string& path) {
    try {
        auto k = amf::kernel_from_json(read_json(path), dir_of(path));
        amf::validate_kernel(k);
        return k;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

amf::FpeConfig load_fpe(const std::string& path, double drift_sup) {
    try {
        auto c = amf::fpe_config_from_json(read_json(path), drift_sup);
        c.validate(drift_sup);
        return c;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

void write_flow(const std::string& dir, const amf::DensityFlow& flow, const std::vector<double>& survival) {
    fs::create_directories(dir);
    amf::write_density_csv(flow, dir + "/density.csv");
    amf::write_survival_csv(flow.time, survival, dir + "/survival.csv");
    write_flux_csv(flow, dir + "/flux.csv");
}

int run_solve_fpe(const Globals& g, const std::string& config_path, const std::string& kernel_path) {
    const auto kernel = load_kernel(kernel_path);
    const auto cfg = load_fpe(config_path, kernel.sup_bound);
    const auto sol = amf::solve_nonlinear_fpe(cfg, kernel);
    write_flow(g.out, sol.flow, sol.flow.beta);
    write_manifest(g.out, {{"fpe", amf::to_json(cfg)}, {"kernel", amf::to_json(kernel)}}, g.seed.value_or(0));
    std::printf("solved on %zu x %zu nodes; beta(T) = %.8f\n", sol.flow.time.size(), sol.flow.space.size(),
                sol.flow.beta.back());
    return 0;
}

int run_fixed_point(const Globals& g, const std::string& config_path, const std::string& kernel_path,
                    const amf::PicardOptions& opts) {
    const auto kernel = load_kernel(kernel_path);
    const auto cfg = load_fpe(config_path, kernel.sup_bound);
    const auto res = amf::picard_solve(kernel, cfg, opts);
    write_flow(g.out, res.pair.flow, res.pair.survival.alpha);
    {
        auto out = amf::csv::open_out(g.out + "/trace.csv");
        out << "iter,d_T\n";
        for (std::size_t i = 0; i < res.trace.size(); ++i) out << i + 1 << ',' << amf::csv::fmt(res.trace[i]) << '\n';
    }
    write_manifest(g.out,
                   {{"fpe", amf::to_json(cfg)},
                    {"kernel", amf::to_json(kernel)},
                    {"tol", opts.tol},
                    {"max_iter", opts.max_iter},
                    {"damping", opts.damping}},
                   g.seed.value_or(0), {{"iterations", res.iterations}, {"segments", res.segment_end.size()}});
    std::printf("converged after %zu iterations in %zu segment(s); beta(T) = %.8f\n", res.iterations,
                res.segment_end.size(), res.pair.flow.beta.back());
    return 0;
}

int run_chaos(const Globals& g, const std::string& config_path) {
    amf::ChaosSweepConfig cfg;
    try {
        cfg = amf::chaos_sweep_config_from_json(read_json(config_path), dir_of(config_path));
        if (g.seed) cfg.sim.seed = *g.seed;
        cfg.threads = g.threads;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    const auto rep = amf::run_chaos_sweep(cfg);
    amf::write_report(rep, g.out);
    std::cout << rep.tables.at("summary") << rep.tables.at("slopes");
    return 0;
}

int run_validate(const Globals& g, double tamper_diffusivity, bool flip_drift) {
    amf::ValidationOptions o;
    try {
        o.level = amf::validation_level_from_string(g.level);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (g.seed) o.seed = *g.seed;
    o.threads = g.threads;
    o.tamper_diffusivity = tamper_diffusivity;
    o.tamper_drift_sign = flip_drift ? -1.0 : 1.0;
    const auto rep = amf::validate_all(o);
    for (const auto& c : rep.checks) {
        std::printf("%s %-3s %-52s value=%-12.6g threshold=%-12.6g %7.1fs  %s\n", c.passed ? "PASS" : "FAIL",
                    c.id.c_str(), c.name.c_str(), c.value, c.threshold, c.seconds, c.detail.c_str());
    }
    amf::write_report(rep, g.out);
    return rep.passed() ? 0 : kValidationFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Absorbed mean-field particle systems and their Fokker-Planck limit"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--level", g.level, "Validation level: fast or full")->capture_default_str();

    std::string config, kernel;
    bool with_paths = false;
    auto* sim = app.add_subcommand("simulate", "Simulate the absorbed N-particle system");
    sim->add_option("--config", config, "SimConfig JSON")->required();
    sim->add_flag("--paths", with_paths, "Also write every step to paths.csv");

    auto* fpe = app.add_subcommand("solve-fpe", "Solve the nonlinear Fokker-Planck equation");
    fpe->add_option("--config", config, "FPE config JSON")->required();
    fpe->add_option("--kernel", kernel, "KernelSpec JSON")->required();

    amf::PicardOptions popts;
    auto* fp = app.add_subcommand("fixed-point", "Picard iteration for the mean-field limit");
    fp->add_option("--config", config, "FPE config JSON")->required();
    fp->add_option("--kernel", kernel, "KernelSpec JSON")->required();
    fp->add_option("--tol", popts.tol, "Stopping tolerance on d_T")->capture_default_str();
    fp->add_option("--max-iter", popts.max_iter, "Iterations per horizon segment")->capture_default_str();
    fp->add_option("--damping", popts.damping, "Relaxation factor in (0, 1]")->capture_default_str();

    auto* chaos = app.add_subcommand("chaos-sweep", "Propagation-of-chaos sweep over particle counts");
    chaos->add_option("--config", config, "ChaosSweepConfig JSON")->required();

    double tamper_diffusivity = 1.0;
    bool flip_drift = false;
    auto* val = app.add_subcommand("validate", "Run the acceptance suite");
    val->add_option("--tamper-diffusivity", tamper_diffusivity, "Deliberately wrong FPE diffusion coefficient");
    val->add_flag("--tamper-drift-sign", flip_drift, "Deliberately flip the FPE drift sign");

    for (auto* sub : {sim, fpe, fp, chaos, val}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }
    if (*seed_opt) g.seed = seed;

    try {
        if (*sim) return run_simulate(g, config, with_paths);
        if (*fpe) return run_solve_fpe(g, config, kernel);
        if (*fp) return run_fixed_point(g, config, kernel, popts);
        if (*chaos) return run_chaos(g, config);
        if (*val) return run_validate(g, tamper_diffusivity, flip_drift);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kConfigError;
    } catch (const amf::PicardDivergence& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
