#pragma once

#include <span>
#include <string>
#include <vector>

#include "amf/grid.hpp"

namespace amf {

struct ParticlePaths;

/// Uniform-weight sample on [0, inf); absorbed particles are atoms at exactly 0.
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;
    /// Sorts the sample; throws if any atom is negative or the sample is empty.
    explicit EmpiricalMeasure(std::vector<double> atoms);

    [[nodiscard]] const std::vector<double>& atoms() const noexcept { return atoms_; }
    [[nodiscard]] std::size_t size() const noexcept { return atoms_.size(); }
    [[nodiscard]] double weight() const noexcept { return 1.0 / static_cast<double>(atoms_.size()); }
    /// Mass of the atom at 0.
    [[nodiscard]] double absorbed_fraction() const noexcept;

    bool operator==(const EmpiricalMeasure&) const = default;

private:
    std::vector<double> atoms_;
};

/// Grid function u(t_k, x_j) and survival beta(t_k), representing
/// mu_t = (1 - beta(t)) delta_0 + u(t, .) dx.
struct DensityFlow {
    UniformGrid time;
    UniformGrid space;
    std::vector<double> u;     // row-major, (time.size()) x (space.size())
    std::vector<double> beta;  // time.size()

    DensityFlow() = default;
    DensityFlow(UniformGrid time_, UniformGrid space_);

    [[nodiscard]] std::span<const double> row(std::size_t k) const {
        return {u.data() + k * space.size(), space.size()};
    }
    [[nodiscard]] std::span<double> row(std::size_t k) { return {u.data() + k * space.size(), space.size()}; }

    /// Throws if the Dirichlet, mass, monotonicity or sign invariants are violated.
    void check_invariants(double mass_tol = 1e-9, double monotone_tol = 1e-12) const;
};

struct SurvivalCurve {
    UniformGrid time;
    std::vector<double> alpha;
};

/// Non-owning view of one time slice of a grid measure.
struct GridMeasureView {
    UniformGrid space;
    std::span<const double> density;
    double beta = 1.0;  // surviving mass; the atom at 0 carries 1 - beta
};

GridMeasureView slice(const DensityFlow& flow, std::size_t k);

/// Order-1 Wasserstein distance on the half-line. Equal-size empirical measures use the
/// sorted-sample formula; otherwise the L1 distance between CDFs is integrated exactly
/// (grid CDFs are piecewise linear between nodes).
double w1_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
double w1_distance(const EmpiricalMeasure& a, const GridMeasureView& b);
double w1_distance(const GridMeasureView& a, const GridMeasureView& b);

/// L1 distance between the CDFs, always via CDF integration (never the sorted-sample shortcut).
double w1_distance_cdf(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

/// sup_k W1(a_k, b_k) + sup_k |f_a(t_k) - f_b(t_k)|.
double flow_distance_dT(const DensityFlow& flow_a, const SurvivalCurve& surv_a,
                        const DensityFlow& flow_b, const SurvivalCurve& surv_b);

/// Same metric restricted to time indices 0..last_index.
double flow_distance_dT(const DensityFlow& flow_a, const SurvivalCurve& surv_a,
                        const DensityFlow& flow_b, const SurvivalCurve& surv_b, std::size_t last_index);

EmpiricalMeasure empirical_at(const ParticlePaths& paths, double t);

/// max over grid pairs of |f(t) - f(s)| / |t - s|^exponent.
double holder_seminorm(const SurvivalCurve& curve, double exponent);

SurvivalCurve survival_of(const DensityFlow& flow);

// CSV round trips: density.csv has a header `t,<x_0>,...,<x_J>` and one row per time;
// survival.csv is `t,beta`; samples.csv is a single `x` column.
void write_density_csv(const DensityFlow& flow, const std::string& path);
void write_survival_csv(const UniformGrid& time, std::span<const double> beta, const std::string& path);
void write_samples_csv(const EmpiricalMeasure& m, const std::string& path);
void write_samples_csv(std::span<const double> samples, const std::string& path);
DensityFlow read_flow_csv(const std::string& density_path, const std::string& survival_path);
EmpiricalMeasure read_samples_csv(const std::string& path);

}  // namespace amf
