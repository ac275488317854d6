#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "amf/fpe.hpp"

namespace amf {

/// Raised when refining the node counts changes a quadrature result by more than the tolerance.
struct QuadratureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParametrixOptions {
    std::size_t time_nodes = 10;   // Gauss-Legendre nodes per time convolution
    std::size_t space_nodes = 8;   // Gauss-Hermite nodes per space convolution
    double tol = 1e-7;             // allowed change when both counts grow by `refine_step`
    std::size_t refine_step = 2;
    bool check_convergence = true;
};

/// Gaussian kernel exp(-z^2 / 2r) / sqrt(2 pi r).
double gaussian_kernel(double r, double z);

/// Heat kernel of dY = sqrt(2) dW: gaussian_kernel(2 (s - t), y - x).
double heat_kernel(double t, double x, double s, double y);

/// Terms 0..K of the parametrix series for the transition density of dY = B dt + sqrt(2) dW
/// on the whole line: term 0 is the heat kernel, term k its k-fold convolution with the
/// correction kernel B(u, z) d_z q(u, z, s, y). Time integrals use u = t + (s - t) sin^2(pi v / 2)
/// so both endpoint singularities are smoothed; space integrals use Gauss-Hermite nodes around the
/// Brownian-bridge mean.
std::vector<double> parametrix_terms(const FrozenDrift& drift, double t, double x, double s, double y,
                                     unsigned K, const ParametrixOptions& opts = {});

/// Sum of parametrix_terms. Throws std::invalid_argument unless s > t.
double parametrix_density(const FrozenDrift& drift, double t, double x, double s, double y, unsigned K,
                          const ParametrixOptions& opts = {});

enum class GreenRoute { parametrix, backward_pde };

struct RepresentationOptions {
    GreenRoute route = GreenRoute::parametrix;
    unsigned K = 2;
    ParametrixOptions parametrix{};
};

struct AlphaResidual {
    double lhs = 0.0;  // alpha(s) / 2
    double rhs = 0.0;
    double residual = 0.0;
};

/// Checks the survival representation
///   alpha(s)/2 = int rho(x) G(0, x) dx - G(0, 0) - int_0^s alpha(t) d_t G(t, 0) dt,
/// where G(t, x) = int_0^inf g(t, x, s, y) dy and g is the whole-line transition density of
/// dY = B dt + sqrt(2) dW. rho and alpha come from `flow` (row 0 and beta); `s` must be a grid time.
/// G(s, 0) is taken as 1/2, d_t G by central differences (one-sided at the ends), all integrals
/// by the trapezoid rule on the flow's grids. The backward_pde route obtains G from the
/// backward Kolmogorov equation on [-x_max, x_max], with B clamped outside the drift table.
AlphaResidual alpha_representation_residual(const DensityFlow& flow, const FrozenDrift& drift, double s,
                                            const RepresentationOptions& opts = {});

}  // namespace amf
