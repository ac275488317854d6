#pragma once

#include <stdexcept>
#include <vector>

#include "amf/fpe.hpp"
#include "amf/kernels.hpp"
#include "amf/measures.hpp"

namespace amf {

/// A measure flow mu_t = (1 - beta) delta_0 + u dx together with a survival-type curve f.
/// The drift functional uses both: B(t, x, mu_t, f(t)).
struct FlowPair {
    DensityFlow flow;
    SurvivalCurve survival;

    /// Pair whose curve is the flow's own survival mass.
    static FlowPair from_flow(DensityFlow flow);
};

/// d_T between two pairs on the same grids.
double pair_distance(const FlowPair& a, const FlowPair& b);
double pair_distance(const FlowPair& a, const FlowPair& b, std::size_t last_index);

/// B(t_k, x_j, mu_{t_k}, f(t_k)) = int b(t_k, x_j, y) u(t_k, y) dy + b(t_k, x_j, 0) (f(t_k) - beta(t_k)).
FrozenDrift frozen_drift(const FlowPair& input, const KernelSpec& kernel);

/// Law of the frozen SDE stopped at 0: assembles frozen_drift(input) and solves the linear FPE.
/// The returned curve equals the returned flow's survival mass.
FlowPair gamma_operator(const FlowPair& input, const KernelSpec& kernel, const FpeConfig& cfg);

struct PicardOptions {
    double tol = 1e-8;
    std::size_t max_iter = 100;
    double damping = 1.0;      // x_{n+1} = (1 - damping) x_n + damping * Gamma(x_n)
    unsigned max_splits = 4;   // horizon bisections allowed before giving up
};

struct PicardResult {
    FlowPair pair;
    std::vector<double> trace;            // d_T(x_{n+1}, x_n), concatenated over segments
    std::vector<std::size_t> segment_end;  // time index where each solved segment ends
    std::size_t iterations = 0;
};

/// Raised when the iteration does not converge even after the allowed horizon splits.
struct PicardDivergence : std::runtime_error {
    double last_distance;
    PicardDivergence(const std::string& what, double last) : std::runtime_error(what), last_distance(last) {}
};

/// Fixed point of gamma_operator by (damped) Picard iteration started from the stopped
/// Brownian motion flow. If a segment fails to converge within max_iter it is bisected in time
/// and the halves are solved one after the other, the second restarted from the first's end state.
PicardResult picard_solve(const KernelSpec& kernel, const FpeConfig& cfg, const PicardOptions& opts = {});

/// d_T(pair, Gamma(pair)); `cfg` supplies the scheme and grids, its initial density is replaced
/// by the pair's first row.
double fixed_point_residual(const FlowPair& pair, const KernelSpec& kernel, FpeConfig cfg);

/// d_{t*}(Gamma a, Gamma b) / d_{t*}(a, b) with t* the time at `last_index`.
double contraction_ratio(const FlowPair& a, const FlowPair& b, const KernelSpec& kernel, const FpeConfig& cfg,
                         std::size_t last_index);

/// Brownian motion with diffusion coefficient sqrt(2), started at z > 0 and stopped at 0.
struct StoppedBmOracle {
    double z = 1.0;
    double t = 1.0;
    double alpha = 1.0;  // erf(z / (2 sqrt t))

    /// (4 pi t)^(-1/2) [exp(-(y - z)^2 / 4t) - exp(-(y + z)^2 / 4t)] for y > 0, else 0.
    [[nodiscard]] double density(double y) const;
};

StoppedBmOracle stopped_bm_oracle(double z, double t);

/// Same process with constant drift c: density G(y - z - ct) - e^{-cz} G(y + z - ct) with
/// G(w) = (4 pi t)^(-1/2) exp(-w^2 / 4t), and the matching survival probability.
double drifted_killed_density(double z, double c, double t, double y);
double drifted_killed_survival(double z, double c, double t);

/// Killed density at time t for the initial density N(z, width^2) (its mass below 0 neglected):
/// G'(y - z - ct) - exp(-cz + c^2 width^2 / 2) G'(y + z - c width^2 - ct), where G' is G at
/// time t + width^2 / 2.
double drifted_killed_density_gaussian(double z, double width, double c, double t, double y);

/// An owned grid measure; the surviving mass is the trapezoid mass of the sampled density so that
/// the measure has total mass 1 on the grid.
struct GridMeasure {
    UniformGrid space;
    std::vector<double> density;
    double beta = 0.0;

    [[nodiscard]] GridMeasureView view() const { return {space, density, beta}; }
};

GridMeasure stopped_bm_measure(double z, double t, const UniformGrid& space);

}  // namespace amf
