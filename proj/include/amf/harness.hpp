#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amf/fpe.hpp"
#include "amf/kernels.hpp"
#include "amf/meanfield.hpp"
#include "amf/particle.hpp"

namespace amf {

/// Version string written into every manifest.
std::string code_version();

/// 64-bit FNV-1a hash of `text`, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

// ---------------------------------------------------------------- test functions

enum class TestFunctionKind { bump, poly_cutoff };

/// C^2 compactly supported phi with analytic first and second derivatives.
///   bump         exp(1 - 1 / (1 - r^2)), r = (x - center) / width, support center +- width
///   poly-cutoff  (4 (x - a)(b - x) / (b - a)^2)^degree on [a, b]; degree >= 3 for C^2
struct TestFunction {
    TestFunctionKind kind = TestFunctionKind::bump;
    double center = 1.0, width = 0.5;  // bump
    double a = 0.5, b = 1.5;           // poly-cutoff support
    unsigned degree = 3;
    double sup = 0.0, sup_d1 = 0.0, sup_d2 = 0.0;  // recorded sup norms

    static TestFunction bump(double center, double width);
    static TestFunction poly_cutoff(unsigned degree, double a, double b);

    [[nodiscard]] double value(double x) const;
    [[nodiscard]] double d1(double x) const;
    [[nodiscard]] double d2(double x) const;

private:
    void record_norms();
};

enum class PathFunctionalKind { constant, bounded_eval };

/// Bounded functional Phi of a path on [0, s]: the constant 1, or min(x_{time}, cap).
struct PathFunctional {
    PathFunctionalKind kind = PathFunctionalKind::constant;
    double time = 0.0;
    double cap = 1.0;

    [[nodiscard]] double sup() const { return kind == PathFunctionalKind::constant ? 1.0 : cap; }
    /// Value for particle i; `time` must be a recorded grid time not after s.
    [[nodiscard]] double operator()(const ParticlePaths& paths, std::size_t i) const;
};

struct TestFunctionSpec {
    TestFunction phi;
    PathFunctional Phi;
};

nlohmann::json to_json(const TestFunctionSpec& spec);
TestFunctionSpec test_function_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------- martingale residuals

/// Theta(mu^N x mu^N): the average over ordered pairs (i, j), diagonal included, of
///   Phi_i (phi(x^i_t) - phi(x^i_s) - int_s^t iota(x^i_u)[phi''(x^i_u) + phi'(x^i_u) b(u, x^i_u, x^j_u) iota(x^j_u)] du).
/// The j-average is taken inside the integral (empirical drift); time integrals use the trapezoid rule.
/// iota is the particle's activity flag. s < t must both be grid times with every step recorded.
double theta_functional(const ParticlePaths& paths, const TestFunctionSpec& test, double s, double t);

/// theta_functional with both indicators replaced by smooth_indicator(eta, .).
double theta_regularized(const ParticlePaths& paths, const TestFunctionSpec& test, double s, double t, double eta);

/// (1/N) sum_i Phi_i (M^i_t - M^i_s), with each particle's drift from empirical_drift
/// (plain index order, no accumulator shortcuts). Equals theta_functional up to rounding.
double theta_martingale_form(const ParticlePaths& paths, const TestFunctionSpec& test, double s, double t);

/// int_s^t (fraction of particles with 0 < x < eta) du, trapezoid rule.
double occupation_integral(const ParticlePaths& paths, double s, double t, double eta);

/// ||Phi|| (||phi''|| + 2 ||phi'|| ||b||): |Theta_eta - Theta| <= this times occupation_integral.
double regularization_constant(const TestFunctionSpec& test, const KernelSpec& kernel);

/// Percentile bootstrap upper bound at `level` for the mean of `samples`.
double bootstrap_upper_mean(const std::vector<double>& samples, double level, std::size_t resamples,
                            std::uint64_t seed);

// ---------------------------------------------------------------- reports

struct CheckResult {
    std::string id;
    std::string name;
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
    double seconds = 0.0;
};

struct ExperimentReport {
    nlohmann::json manifest;
    std::map<std::string, std::string> tables;  // name -> CSV text with header row
    std::vector<CheckResult> checks;

    [[nodiscard]] bool passed() const;
};

nlohmann::json make_manifest(const nlohmann::json& config, std::uint64_t seed);

/// Writes `<name>.csv` for every table, `checks.csv` when there are checks, and `manifest.json`.
void write_report(const ExperimentReport& report, const std::string& dir);

// ---------------------------------------------------------------- chaos sweep

enum class LimitMethod { picard, nonlinear, oracle };

struct ChaosSweepConfig {
    std::vector<std::size_t> n_list{250, 1000, 4000};
    std::size_t replicas = 20;
    std::vector<double> times{1.0};
    SimConfig sim;         // n_particles and seed are overridden per run
    FpeConfig fpe;         // grid for the limit flow; its initial density should match sim.initial_law
    LimitMethod limit = LimitMethod::picard;
    PicardOptions picard{};
    double step_budget = 2e7;  // max(n_list) * replicas * n_steps must not exceed this
    unsigned threads = 1;
};

/// Seed of replica `rep` at particle count `n`.
std::uint64_t replica_seed(std::uint64_t base, std::size_t n, std::size_t rep);

/// Tables: `replicas` (n, replica, seed, t, w1, status), `summary` (n, t, mean_w1, stderr, count)
/// and `slopes` (t, slope of log mean W1 against log N). Per-replica failures are recorded and
/// skipped in the summary.
ExperimentReport run_chaos_sweep(const ChaosSweepConfig& cfg);

nlohmann::json to_json(const ChaosSweepConfig& cfg);
ChaosSweepConfig chaos_sweep_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------- validation suite

enum class ValidationLevel { fast, full };

ValidationLevel validation_level_from_string(const std::string& s);

struct ValidationOptions {
    ValidationLevel level = ValidationLevel::fast;
    std::uint64_t seed = 20240917;
    unsigned threads = 1;
    /// Deliberate defects for mutation testing: FPE diffusion coefficient and the sign of the
    /// drift handed to the FPE solver. Defaults are the correct values.
    double tamper_diffusivity = 1.0;
    double tamper_drift_sign = 1.0;
};

CheckResult check_stopped_bm_survival(const ValidationOptions& o);
CheckResult check_images_density(const ValidationOptions& o);
CheckResult check_drifted_images(const ValidationOptions& o);
CheckResult check_flux_identity(const ValidationOptions& o);
CheckResult check_girsanov(const ValidationOptions& o);
CheckResult check_theta_bound(const ValidationOptions& o);
CheckResult check_fixed_point(const ValidationOptions& o);
CheckResult check_propagation_of_chaos(const ValidationOptions& o);
CheckResult check_alpha_representation(const ValidationOptions& o);
CheckResult check_parametrix(const ValidationOptions& o);
CheckResult check_determinism(const ValidationOptions& o);

/// Every check above in order, wrapped in a report with a `checks` table.
ExperimentReport validate_all(const ValidationOptions& o);

}  // namespace amf
