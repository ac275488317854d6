#include "amf/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace amf {

FlowPair FlowPair::from_flow(DensityFlow flow) {
    auto curve = survival_of(flow);
    return {std::move(flow), std::move(curve)};
}

double pair_distance(const FlowPair& a, const FlowPair& b) {
    return flow_distance_dT(a.flow, a.survival, b.flow, b.survival);
}

double pair_distance(const FlowPair& a, const FlowPair& b, std::size_t last_index) {
    return flow_distance_dT(a.flow, a.survival, b.flow, b.survival, last_index);
}

FrozenDrift frozen_drift(const FlowPair& input, const KernelSpec& kernel) {
    const auto& flow = input.flow;
    if (!input.survival.time.same_as(flow.time) || input.survival.alpha.size() != flow.time.size()) {
        throw std::invalid_argument("flow and survival curve live on different time grids");
    }
    const std::size_t n = flow.space.size();
    std::vector<double> table(flow.time.size() * n);
    for (std::size_t k = 0; k < flow.time.size(); ++k) {
        const double t = flow.time.at(k);
        const double beta = std::clamp(flow.beta[k], 0.0, 1.0);
        const auto row = mean_field_drift_row(kernel, t, flow.row(k), flow.space, beta);
        const double gap = input.survival.alpha[k] - flow.beta[k];
        for (std::size_t j = 0; j < n; ++j) {
            double v = row[j];
            if (gap != 0.0) v += eval_kernel(kernel, t, flow.space.at(j), 0.0) * gap;
            table[k * n + j] = v;
        }
    }
    return FrozenDrift(flow.time, flow.space, std::move(table));
}

FlowPair gamma_operator(const FlowPair& input, const KernelSpec& kernel, const FpeConfig& cfg) {
    if (!input.flow.time.same_as(cfg.time_grid(), 1e-9) || !input.flow.space.same_as(cfg.space_grid(), 1e-9)) {
        throw std::invalid_argument("input flow does not live on the solver grids");
    }
    return FlowPair::from_flow(solve_linear_fpe(cfg, frozen_drift(input, kernel)));
}

namespace {

FlowPair mix(const FlowPair& old, FlowPair next, double lambda) {
    if (lambda == 1.0) return next;
    for (std::size_t i = 0; i < next.flow.u.size(); ++i) next.flow.u[i] = (1 - lambda) * old.flow.u[i] + lambda * next.flow.u[i];
    for (std::size_t k = 0; k < next.flow.beta.size(); ++k) {
        next.flow.beta[k] = (1 - lambda) * old.flow.beta[k] + lambda * next.flow.beta[k];
        next.survival.alpha[k] = (1 - lambda) * old.survival.alpha[k] + lambda * next.survival.alpha[k];
    }
    return next;
}

struct SegmentOutcome {
    FlowPair pair;
    bool converged = false;
    double last = 0.0;
};

SegmentOutcome iterate(const KernelSpec& kernel, const FpeConfig& cfg, const PicardOptions& opts,
                       std::vector<double>& trace) {
    auto x = FlowPair::from_flow(solve_linear_fpe(cfg, FrozenDrift::zero(cfg.time_grid(), cfg.space_grid())));
    double d = 0.0;
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        auto y = mix(x, gamma_operator(x, kernel, cfg), opts.damping);
        d = pair_distance(y, x);
        trace.push_back(d);
        x = std::move(y);
        if (d < opts.tol) return {std::move(x), true, d};
        if (!std::isfinite(d)) break;
    }
    return {std::move(x), false, d};
}

FpeConfig segment(const FpeConfig& base, std::size_t first, std::size_t intervals, std::vector<double> initial,
                  double mass) {
    const auto time = base.time_grid();
    FpeConfig c = base;
    c.t_start = time.at(first);
    c.k = time.step;
    c.horizon = time.step * static_cast<double>(intervals);
    c.initial = std::move(initial);
    c.initial_mass = mass;
    return c;
}

void solve_segment(const KernelSpec& kernel, const FpeConfig& cfg, const PicardOptions& opts, unsigned depth,
                   std::vector<FlowPair>& done, PicardResult& result) {
    auto out = iterate(kernel, cfg, opts, result.trace);
    if (out.converged) {
        result.segment_end.push_back(done.empty() ? out.pair.flow.time.intervals
                                                  : result.segment_end.back() + out.pair.flow.time.intervals);
        done.push_back(std::move(out.pair));
        return;
    }
    const std::size_t M = cfg.time_grid().intervals;
    if (depth >= opts.max_splits || M < 2) {
        throw PicardDivergence("Picard iteration did not converge; last d_T = " + std::to_string(out.last) +
                                   " (try a shorter horizon or stronger damping)",
                               out.last);
    }
    const std::size_t half = M / 2;
    auto first = segment(cfg, 0, half, cfg.initial, cfg.initial_mass);
    solve_segment(kernel, first, opts, depth + 1, done, result);
    const auto& prev = done.back().flow;
    const auto tail = prev.row(prev.time.intervals);
    auto second = segment(cfg, half, M - half, {tail.begin(), tail.end()}, prev.beta.back());
    solve_segment(kernel, second, opts, depth + 1, done, result);
}

}  // namespace

PicardResult picard_solve(const KernelSpec& kernel, const FpeConfig& cfg, const PicardOptions& opts) {
    if (!(opts.tol > 0.0) || opts.max_iter == 0 || !(opts.damping > 0.0 && opts.damping <= 1.0)) {
        throw std::invalid_argument("Picard options need tol > 0, max_iter >= 1 and damping in (0, 1]");
    }
    validate_kernel(kernel);
    PicardResult result;
    std::vector<FlowPair> parts;
    solve_segment(kernel, cfg, opts, 0, parts, result);
    result.iterations = result.trace.size();
    if (parts.size() == 1) {
        result.pair = std::move(parts.front());
        return result;
    }
    // Stitch the segments back onto the full time grid.
    DensityFlow flow(cfg.time_grid(), cfg.space_grid());
    SurvivalCurve curve{flow.time, std::vector<double>(flow.time.size())};
    std::size_t k0 = 0;
    for (const auto& p : parts) {
        for (std::size_t k = 0; k <= p.flow.time.intervals; ++k) {
            const auto src = p.flow.row(k);
            std::copy(src.begin(), src.end(), flow.row(k0 + k).begin());
            flow.beta[k0 + k] = p.flow.beta[k];
            curve.alpha[k0 + k] = p.survival.alpha[k];
        }
        k0 += p.flow.time.intervals;
    }
    result.pair = {std::move(flow), std::move(curve)};
    return result;
}

double fixed_point_residual(const FlowPair& pair, const KernelSpec& kernel, FpeConfig cfg) {
    const auto r0 = pair.flow.row(0);
    cfg.initial.assign(r0.begin(), r0.end());
    cfg.initial_mass = pair.flow.beta[0];
    return pair_distance(pair, gamma_operator(pair, kernel, cfg));
}

double contraction_ratio(const FlowPair& a, const FlowPair& b, const KernelSpec& kernel, const FpeConfig& cfg,
                         std::size_t last_index) {
    const double before = pair_distance(a, b, last_index);
    if (!(before > 0.0)) throw std::invalid_argument("contraction ratio needs distinct inputs");
    return pair_distance(gamma_operator(a, kernel, cfg), gamma_operator(b, kernel, cfg), last_index) / before;
}

namespace {
double heat(double t, double w) { return std::exp(-w * w / (4.0 * t)) / std::sqrt(4.0 * std::numbers::pi * t); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
}  // namespace

double StoppedBmOracle::density(double y) const {
    if (y <= 0.0) return 0.0;
    return heat(t, y - z) - heat(t, y + z);
}

StoppedBmOracle stopped_bm_oracle(double z, double t) {
    if (!(z > 0.0) || !(t > 0.0)) throw std::invalid_argument("stopped Brownian motion oracle needs z > 0 and t > 0");
    return {z, t, std::erf(z / (2.0 * std::sqrt(t)))};
}

double drifted_killed_density(double z, double c, double t, double y) {
    if (!(z > 0.0) || !(t > 0.0)) throw std::invalid_argument("drifted oracle needs z > 0 and t > 0");
    if (y <= 0.0) return 0.0;
    return heat(t, y - z - c * t) - std::exp(-c * z) * heat(t, y + z - c * t);
}

double drifted_killed_survival(double z, double c, double t) {
    if (!(z > 0.0) || !(t > 0.0)) throw std::invalid_argument("drifted oracle needs z > 0 and t > 0");
    const double s = std::sqrt(2.0 * t);
    return normal_cdf((z + c * t) / s) - std::exp(-c * z) * normal_cdf((c * t - z) / s);
}

double drifted_killed_density_gaussian(double z, double width, double c, double t, double y) {
    if (!(z > 0.0) || !(t > 0.0) || !(width > 0.0)) throw std::invalid_argument("drifted oracle needs z, t, width > 0");
    if (y <= 0.0) return 0.0;
    const double w2 = width * width, tt = t + 0.5 * w2;
    return heat(tt, y - z - c * t) - std::exp(-c * z + 0.5 * c * c * w2) * heat(tt, y + z - c * w2 - c * t);
}

GridMeasure stopped_bm_measure(double z, double t, const UniformGrid& space) {
    const auto o = stopped_bm_oracle(z, t);
    GridMeasure m{space, std::vector<double>(space.size(), 0.0), 0.0};
    for (std::size_t j = 1; j + 1 < space.size(); ++j) m.density[j] = o.density(space.at(j));
    m.beta = trapezoid(m.density, space.step);
    return m;
}

}  // namespace amf
