#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "amf/grid.hpp"

namespace amf {

enum class KernelFamily { zero, constant, separable_product, rational_attractive, tabulated };

std::string to_string(KernelFamily f);
KernelFamily kernel_family_from_string(const std::string& s);

/// Values of b on a regular (t, x, y) lattice, trilinearly interpolated and clamped at the edges.
struct KernelTable {
    std::vector<double> t, x, y;  // strictly increasing axes
    std::vector<double> b;        // index ((it * nx) + ix) * ny + iy

    double operator()(double tt, double xx, double yy) const;
    static KernelTable read_csv(const std::string& path);
};

/// Interaction kernel b(t, x, y).
///
/// Families and their parameters:
///   zero                 []                 b = 0
///   constant             [c]                b = c
///   separable-product    [a, kx, ky]        b = a * tanh(kx x) * tanh(ky y)
///   rational-attractive  [a, len]           b = a / (1 + ((x - y) / len)^2)
///   tabulated            []                 trilinear interpolation of `table`
///
/// `sup_bound` is the declared ||b||_inf; it is validated by probing, never estimated.
struct KernelSpec {
    KernelFamily family = KernelFamily::zero;
    std::vector<double> params;
    double sup_bound = 0.0;
    double holder_exponent = 1.0;
    std::shared_ptr<const KernelTable> table;
    std::string table_path;

    static KernelSpec zero();
    static KernelSpec constant(double c);
    static KernelSpec separable_product(double a, double kx, double ky);
    static KernelSpec rational_attractive(double a, double length = 1.0);
    static KernelSpec tabulated(KernelTable table, double sup_bound, double holder_exponent = 1.0);
};

/// Throws std::invalid_argument on a malformed spec or when 10^5 deterministic probes
/// find |b| above the declared bound.
void validate_kernel(const KernelSpec& spec);

double eval_kernel(const KernelSpec& spec, double t, double x, double y);

/// B(t, x, lambda, a) for lambda = atom_mass * delta_0 + density dx: the integral of b against
/// lambda minus b(t, x, 0) (1 - a). The density integral is a trapezoid on `space`.
double interaction_drift(const KernelSpec& spec, double t, double x, double atom_mass,
                         std::span<const double> density, const UniformGrid& space, double a);

/// B evaluated at mu_t = (1 - beta) delta_0 + u dx with a = beta. The atom cancels the
/// correction, leaving the integral of b(t, x, y) u(y) over (0, inf).
double mean_field_drift(const KernelSpec& spec, double t, double x, std::span<const double> density,
                        const UniformGrid& space, double beta, double mass_tol = 1e-6);

/// mean_field_drift at every node of `space`, with O(J) fast paths for the separable families.
std::vector<double> mean_field_drift_row(const KernelSpec& spec, double t,
                                         std::span<const double> density, const UniformGrid& space,
                                         double beta);

/// (1/N) sum_j b(t, x_i, x_j) 1{x_j > 0}; `i` is 0-based. Summation follows the given order.
double empirical_drift(const KernelSpec& spec, double t, std::size_t i, std::span<const double> positions);

/// (1/n_total) sum_j b(t, x, y_j) w_j over the given sources, for every target x. Fast paths for
/// zero/constant/separable kernels; the generic path sums in source order.
void weighted_drift(const KernelSpec& spec, double t, std::span<const double> targets,
                    std::span<const double> sources, std::span<const double> weights,
                    double n_total, std::span<double> out);

/// C^2 regularisation of the indicator 1{x > 0}: S(clamp(x / eta, 0, 1)) with
/// S(u) = 10u^3 - 15u^4 + 6u^5. Equals 0 for x <= 0 and 1 for x >= eta.
struct SmoothIndicator {
    double eta = 1.0;
    explicit SmoothIndicator(double eta_);
    double operator()(double x) const noexcept;
};

double smooth_indicator(double eta, double x);

nlohmann::json to_json(const KernelSpec& spec);
/// `base_dir` resolves relative table paths of tabulated kernels.
KernelSpec kernel_from_json(const nlohmann::json& j, const std::string& base_dir = ".");

}  // namespace amf
