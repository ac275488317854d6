#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "amf/grid.hpp"
#include "amf/kernels.hpp"
#include "amf/measures.hpp"

namespace amf {

struct InitialLaw;

enum class FpeScheme { implicit_upwind, crank_nicolson_upwind };

std::string to_string(FpeScheme s);
FpeScheme fpe_scheme_from_string(const std::string& s);

/// Discretisation of  d_t u = D d_xx u - d_x(B u)  on (0, x_max) with u(t, 0) = u(t, x_max) = 0.
///
/// D = 1 is the generator of dX = B dt + sqrt(2) dW. The SDE's sqrt(2) is already folded in;
/// `diffusivity` exists so that mutation tests can break it on purpose.
struct FpeConfig {
    double h = 1e-2;        // requested space step (adjusted so that x_max is a node)
    double k = 1e-2;        // requested time step (adjusted so that the horizon is a node)
    double x_max = 10.0;
    double horizon = 1.0;
    double t_start = 0.0;
    FpeScheme scheme = FpeScheme::implicit_upwind;
    std::vector<double> initial;  // rho on space_grid()
    double initial_mass = 1.0;
    double diffusivity = 1.0;
    unsigned rannacher_steps = 2;  // CN start-up: first steps replaced by two implicit half steps

    [[nodiscard]] UniformGrid space_grid() const { return UniformGrid::covering(0.0, x_max, h); }
    [[nodiscard]] UniformGrid time_grid() const { return UniformGrid::covering(t_start, t_start + horizon, k); }
    /// Throws std::invalid_argument on bad steps, a malformed rho, or drift CFL sup * k / h > 1.
    void validate(double drift_sup) const;
};

/// Domain size with Gaussian tail mass beyond x_max below 1e-10 over the horizon.
double recommended_x_max(double z_max, double horizon, double drift_sup);

/// Initial density on `space` for a particle initial law. A point mass becomes a Gaussian of
/// standard deviation `point_width`. Node 0 is set to 0 and the result is renormalised to mass 1.
std::vector<double> initial_density(const InitialLaw& law, const UniformGrid& space, double point_width);

/// Gaussian bump N(center, width^2) restricted to the grid, node 0 zeroed, trapezoid mass 1.
std::vector<double> gaussian_density(double center, double width, const UniformGrid& space);

/// Drift table B(t_k, x_j), bilinearly interpolated and clamped outside its grids.
struct FrozenDrift {
    UniformGrid time;
    UniformGrid space;
    std::vector<double> table;  // time.size() x space.size()
    double sup_bound = 0.0;

    FrozenDrift() = default;
    FrozenDrift(UniformGrid time_, UniformGrid space_, std::vector<double> table_);

    [[nodiscard]] std::span<const double> row(std::size_t k) const { return {table.data() + k * space.size(), space.size()}; }
    double operator()(double t, double x) const;

    static FrozenDrift constant(const UniformGrid& time, const UniformGrid& space, double c);
    static FrozenDrift zero(const UniformGrid& time, const UniformGrid& space) { return constant(time, space, 0.0); }
};

DensityFlow solve_linear_fpe(const FpeConfig& cfg, const FrozenDrift& drift);

struct NonlinearSolution {
    DensityFlow flow;
    FrozenDrift drift;  // the assembled drift used for each step (row k drives step k -> k+1)
};

/// Drift at step k assembled from the step-k density through mean_field_drift; diffusion implicit.
NonlinearSolution solve_nonlinear_fpe(const FpeConfig& cfg, const KernelSpec& kernel);

/// -(d_x u)(t_k, 0+) from the second-order one-sided difference, i.e. the survival decay rate.
double boundary_flux(const DensityFlow& flow, std::size_t k);

/// Minimum allowed spatial derivative at the boundary before boundary_flux reports an error.
inline constexpr double kFluxSignTolerance = 1e-8;

nlohmann::json to_json(const FpeConfig& c);
/// Reads {"h","k","x_max"?,"horizon","scheme"?,"initial": {...}}; x_max defaults to
/// recommended_x_max for the initial law and `drift_sup`.
FpeConfig fpe_config_from_json(const nlohmann::json& j, double drift_sup);

}  // namespace amf
