#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "amf/grid.hpp"
#include "amf/kernels.hpp"
#include "amf/measures.hpp"

namespace amf {

enum class InitialLawKind { point, lognormal, uniform, tabulated_quantile };

/// Law of the initial positions, supported on (0, inf).
///   point              [z]
///   lognormal          [m, s]     exp(m + s N(0,1))
///   uniform            [a, b]     0 <= a < b
///   tabulated-quantile `quantiles` at equally spaced probabilities 0, 1/K, ..., 1
struct InitialLaw {
    InitialLawKind kind = InitialLawKind::point;
    std::vector<double> params{1.0};
    std::vector<double> quantiles;

    static InitialLaw point(double z) { return {InitialLawKind::point, {z}, {}}; }
    static InitialLaw uniform(double a, double b) { return {InitialLawKind::uniform, {a, b}, {}}; }
    static InitialLaw lognormal(double m, double s) { return {InitialLawKind::lognormal, {m, s}, {}}; }

    void validate() const;
    /// Sample from a (normal, uniform) pair.
    [[nodiscard]] double sample(double normal, double uniform) const;
    /// Largest point of the support that matters for domain sizing (99.99999% quantile for lognormal).
    [[nodiscard]] double upper_extent() const;
};

struct SimConfig {
    std::size_t n_particles = 1;
    double horizon = 1.0;
    std::size_t n_steps = 100;
    KernelSpec kernel;
    InitialLaw initial_law;
    std::uint64_t seed = 0;
    bool bridge_correction = true;
    unsigned threads = 1;
    /// Steps whose positions are stored; empty means every step.
    std::vector<std::size_t> record_steps;

    [[nodiscard]] double dt() const noexcept { return horizon / static_cast<double>(n_steps); }
    [[nodiscard]] UniformGrid time_grid() const noexcept { return {0.0, dt(), n_steps}; }
    /// Throws std::invalid_argument (configuration error) on invalid settings, including the
    /// stability guard dt * ||b||_inf < 0.1.
    void validate() const;
};

/// Trajectories on the simulation grid. Absorbed particles sit at exactly 0 from their
/// absorption step on.
struct ParticlePaths {
    SimConfig config;
    std::size_t reference_count = 0;  // r of the reference system, 0 for the interacting system
    std::vector<std::size_t> recorded_steps;
    std::vector<double> positions;            // recorded_steps.size() x N, row-major
    std::vector<std::size_t> absorption_step;  // n_steps + 1 means never absorbed
    std::vector<std::uint64_t> stream_ids;     // rng manifest: stream of particle i
    double max_abs_drift = 0.0;

    [[nodiscard]] std::size_t n() const noexcept { return absorption_step.size(); }
    [[nodiscard]] UniformGrid time_grid() const noexcept { return config.time_grid(); }
    [[nodiscard]] bool has_all_steps() const noexcept { return recorded_steps.size() == config.n_steps + 1; }
    /// Positions at simulation step k; throws if the step was not recorded.
    [[nodiscard]] std::span<const double> at_step(std::size_t k) const;
    [[nodiscard]] bool active(std::size_t i, std::size_t k) const noexcept { return k < absorption_step[i]; }
    /// Fraction of particles not absorbed by each step.
    [[nodiscard]] std::vector<double> survival() const;
    [[nodiscard]] std::vector<double> terminal() const { auto r = at_step(config.n_steps); return {r.begin(), r.end()}; }
};

/// Euler-Maruyama for the absorbed N-particle system. Particle i draws from stream i.
ParticlePaths simulate(const SimConfig& config);

/// Same, with explicit initial positions and stream identifiers (one per particle).
ParticlePaths simulate(const SimConfig& config, std::span<const double> initial,
                       std::span<const std::uint64_t> streams);

/// Reference system: the first r particles are stopped Brownian motions; the others interact
/// only among themselves (the 1/N normalisation is kept). Requires 1 <= r <= N.
ParticlePaths simulate_reference(const SimConfig& config, std::size_t r);

struct GirsanovWeight {
    std::size_t r = 0;
    double log_weight = 0.0;
    double quadratic_variation = 0.0;  // sum_k |beta_k|^2 dt
    [[nodiscard]] double weight() const;
};

/// Likelihood ratio of the interacting system against the reference system along `ref_paths`,
/// replaying the Gaussian increments from the stored streams.
GirsanovWeight girsanov_weight(const ParticlePaths& ref_paths, std::size_t r, const KernelSpec& kernel);

nlohmann::json to_json(const SimConfig& c);
SimConfig sim_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");

}  // namespace amf
