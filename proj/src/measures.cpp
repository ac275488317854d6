#include "amf/measures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "amf/csv.hpp"
#include "amf/particle.hpp"

namespace amf {

namespace {

// Integral over [0, len] of |d0 + (d1 - d0) s / len|.
double abs_linear_integral(double d0, double d1, double len) {
    if (len <= 0.0) return 0.0;
    if (d0 * d1 >= 0.0) return 0.5 * len * std::abs(d0 + d1);
    const double theta = d0 / (d0 - d1);
    return 0.5 * len * (theta * std::abs(d0) + (1.0 - theta) * std::abs(d1));
}

// CDF values at the grid nodes, including the atom at 0.
std::vector<double> node_cdf(const GridMeasureView& m) {
    if (m.density.size() != m.space.size()) throw std::invalid_argument("grid measure size mismatch");
    std::vector<double> g(m.density.size());
    g[0] = 1.0 - m.beta;
    for (std::size_t j = 1; j < g.size(); ++j) g[j] = g[j - 1] + 0.5 * m.space.step * (m.density[j - 1] + m.density[j]);
    if (std::abs(g.back() - 1.0) > 1e-9) throw std::invalid_argument("grid measure mass differs from 1");
    return g;
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw std::invalid_argument("empirical measure needs at least one atom");
    for (double a : atoms_) {
        if (!(a >= 0.0)) throw std::invalid_argument("empirical measure atoms must be >= 0");
    }
    std::sort(atoms_.begin(), atoms_.end());
}

double EmpiricalMeasure::absorbed_fraction() const noexcept {
    const auto n0 = std::upper_bound(atoms_.begin(), atoms_.end(), 0.0) - atoms_.begin();
    return static_cast<double>(n0) / static_cast<double>(atoms_.size());
}

DensityFlow::DensityFlow(UniformGrid time_, UniformGrid space_)
    : time(time_), space(space_), u(time_.size() * space_.size(), 0.0), beta(time_.size(), 0.0) {}

void DensityFlow::check_invariants(double mass_tol, double monotone_tol) const {
    if (u.size() != time.size() * space.size() || beta.size() != time.size()) {
        throw std::logic_error("density flow storage does not match its grids");
    }
    for (std::size_t k = 0; k < time.size(); ++k) {
        const auto r = row(k);
        if (r.front() != 0.0) throw std::logic_error("Dirichlet condition u(t,0)=0 violated");
        if (std::abs(trapezoid(r, space.step) - beta[k]) > mass_tol) throw std::logic_error("beta != trapezoid(u)");
        if (beta[k] < -mass_tol || beta[k] > 1.0 + mass_tol) throw std::logic_error("beta outside [0,1]");
        if (k > 0 && beta[k] > beta[k - 1] + monotone_tol) throw std::logic_error("beta increased");
        for (double v : r) {
            if (v < 0.0) throw std::logic_error("negative density");
        }
    }
}

GridMeasureView slice(const DensityFlow& flow, std::size_t k) {
    if (k >= flow.time.size()) throw std::out_of_range("time index out of range");
    return GridMeasureView{flow.space, flow.row(k), flow.beta[k]};
}

double w1_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("empty empirical measure");
    if (a.size() != b.size()) return w1_distance_cdf(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.atoms()[i] - b.atoms()[i]);
    return s / static_cast<double>(a.size());
}

double w1_distance_cdf(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("empty empirical measure");
    const auto& xa = a.atoms();
    const auto& xb = b.atoms();
    const double wa = a.weight(), wb = b.weight();
    std::size_t ia = 0, ib = 0;
    double fa = 0.0, fb = 0.0, x = 0.0, s = 0.0;
    while (ia < xa.size() || ib < xb.size()) {
        const double next = std::min(ia < xa.size() ? xa[ia] : INFINITY, ib < xb.size() ? xb[ib] : INFINITY);
        s += std::abs(fa - fb) * (next - x);
        x = next;
        while (ia < xa.size() && xa[ia] == x) { fa = static_cast<double>(++ia) * wa; }
        while (ib < xb.size() && xb[ib] == x) { fb = static_cast<double>(++ib) * wb; }
    }
    return s;
}

double w1_distance(const EmpiricalMeasure& a, const GridMeasureView& b) {
    if (a.size() == 0) throw std::invalid_argument("empty empirical measure");
    const auto g = node_cdf(b);
    const auto& xs = a.atoms();
    const double w = a.weight();
    const double h = b.space.step;
    const std::size_t J = b.space.intervals;

    std::size_t p = 0;  // atoms <= current position
    while (p < xs.size() && xs[p] <= 0.0) ++p;
    double s = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        const double xl = b.space.at(j), xr = b.space.at(j + 1);
        double lo = xl, glo = g[j];
        const double slope = (g[j + 1] - g[j]) / h;
        while (p < xs.size() && xs[p] < xr) {
            const double x = xs[p];
            const double gx = g[j] + slope * (x - xl);
            s += abs_linear_integral(glo - static_cast<double>(p) * w, gx - static_cast<double>(p) * w, x - lo);
            lo = x;
            glo = gx;
            while (p < xs.size() && xs[p] == x) ++p;
        }
        s += abs_linear_integral(glo - static_cast<double>(p) * w, g[j + 1] - static_cast<double>(p) * w, xr - lo);
    }
    // beyond the grid the reference CDF is flat
    double lo = b.space.end();
    while (p < xs.size()) {
        const double x = xs[p];
        s += std::abs(g.back() - static_cast<double>(p) * w) * (x - lo);
        lo = x;
        while (p < xs.size() && xs[p] == x) ++p;
    }
    return s;
}

double w1_distance(const GridMeasureView& a, const GridMeasureView& b) {
    if (!a.space.same_as(b.space)) throw std::invalid_argument("grid measures live on different grids");
    const auto ga = node_cdf(a);
    const auto gb = node_cdf(b);
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < ga.size(); ++j) {
        s += abs_linear_integral(ga[j] - gb[j], ga[j + 1] - gb[j + 1], a.space.step);
    }
    return s;
}

double flow_distance_dT(const DensityFlow& flow_a, const SurvivalCurve& surv_a, const DensityFlow& flow_b,
                        const SurvivalCurve& surv_b) {
    return flow_distance_dT(flow_a, surv_a, flow_b, surv_b, flow_a.time.intervals);
}

double flow_distance_dT(const DensityFlow& flow_a, const SurvivalCurve& surv_a, const DensityFlow& flow_b,
                        const SurvivalCurve& surv_b, std::size_t last_index) {
    if (!flow_a.time.same_as(flow_b.time) || !surv_a.time.same_as(flow_a.time) || !surv_b.time.same_as(flow_b.time)) {
        throw std::invalid_argument("flows live on different time grids");
    }
    if (last_index > flow_a.time.intervals) throw std::out_of_range("last_index beyond horizon");
    double w = 0.0, f = 0.0;
    for (std::size_t k = 0; k <= last_index; ++k) {
        w = std::max(w, w1_distance(slice(flow_a, k), slice(flow_b, k)));
        f = std::max(f, std::abs(surv_a.alpha[k] - surv_b.alpha[k]));
    }
    return w + f;
}

EmpiricalMeasure empirical_at(const ParticlePaths& paths, double t) {
    const std::size_t step = paths.time_grid().index_of(t);
    const auto row = paths.at_step(step);
    return EmpiricalMeasure(std::vector<double>(row.begin(), row.end()));
}

double holder_seminorm(const SurvivalCurve& curve, double exponent) {
    if (!(exponent > 0.0 && exponent <= 1.0)) throw std::invalid_argument("exponent must lie in (0, 1]");
    const std::size_t n = curve.alpha.size();
    if (n < 2 || curve.time.size() != n) throw std::invalid_argument("need at least two grid points");
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dt = curve.time.at(j) - curve.time.at(i);
            best = std::max(best, std::abs(curve.alpha[j] - curve.alpha[i]) / std::pow(dt, exponent));
        }
    }
    return best;
}

SurvivalCurve survival_of(const DensityFlow& flow) { return SurvivalCurve{flow.time, flow.beta}; }

void write_density_csv(const DensityFlow& flow, const std::string& path) {
    auto out = csv::open_out(path);
    out << "t";
    for (std::size_t j = 0; j < flow.space.size(); ++j) out << ',' << csv::fmt(flow.space.at(j));
    out << '\n';
    for (std::size_t k = 0; k < flow.time.size(); ++k) {
        out << csv::fmt(flow.time.at(k));
        for (double v : flow.row(k)) out << ',' << csv::fmt(v);
        out << '\n';
    }
}

void write_survival_csv(const UniformGrid& time, std::span<const double> beta, const std::string& path) {
    auto out = csv::open_out(path);
    out << "t,beta\n";
    for (std::size_t k = 0; k < beta.size(); ++k) out << csv::fmt(time.at(k)) << ',' << csv::fmt(beta[k]) << '\n';
}

void write_samples_csv(std::span<const double> samples, const std::string& path) {
    auto out = csv::open_out(path);
    out << "x\n";
    for (double v : samples) out << csv::fmt(v) << '\n';
}

void write_samples_csv(const EmpiricalMeasure& m, const std::string& path) { write_samples_csv(m.atoms(), path); }

namespace {

UniformGrid grid_from_values(const std::vector<double>& v) {
    if (v.size() < 2) throw std::invalid_argument("grid needs at least two nodes");
    const std::size_t n = v.size() - 1;
    UniformGrid g{v.front(), (v.back() - v.front()) / static_cast<double>(n), n};
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::abs(g.at(i) - v[i]) > 1e-9 * std::max(1.0, std::abs(v[i]))) {
            throw std::invalid_argument("grid values are not uniform");
        }
    }
    return g;
}

}  // namespace

DensityFlow read_flow_csv(const std::string& density_path, const std::string& survival_path) {
    auto in = csv::open_in(density_path);
    std::string line;
    std::getline(in, line);
    auto head = csv::split(line);
    if (head.empty() || head[0] != "t") throw std::invalid_argument("density.csv must start with a 't' column");
    std::vector<double> xs;
    for (std::size_t i = 1; i < head.size(); ++i) xs.push_back(csv::parse(head[i]));
    std::vector<double> ts, u;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = csv::split(line);
        if (cells.size() != head.size()) throw std::invalid_argument("ragged density.csv row");
        ts.push_back(csv::parse(cells[0]));
        for (std::size_t i = 1; i < cells.size(); ++i) u.push_back(csv::parse(cells[i]));
    }
    DensityFlow flow(grid_from_values(ts), grid_from_values(xs));
    flow.u = std::move(u);

    auto sin = csv::open_in(survival_path);
    std::getline(sin, line);
    if (csv::split(line) != std::vector<std::string>{"t", "beta"}) throw std::invalid_argument("survival.csv header must be t,beta");
    std::size_t k = 0;
    while (std::getline(sin, line)) {
        if (line.empty()) continue;
        auto cells = csv::split(line);
        if (cells.size() != 2 || k >= flow.beta.size()) throw std::invalid_argument("survival.csv does not match density.csv");
        flow.beta[k++] = csv::parse(cells[1]);
    }
    if (k != flow.beta.size()) throw std::invalid_argument("survival.csv does not match density.csv");
    return flow;
}

EmpiricalMeasure read_samples_csv(const std::string& path) {
    auto in = csv::open_in(path);
    std::string line;
    std::getline(in, line);
    std::vector<double> v;
    while (std::getline(in, line)) {
        if (!line.empty()) v.push_back(csv::parse(line));
    }
    return EmpiricalMeasure(std::move(v));
}

}  // namespace amf
