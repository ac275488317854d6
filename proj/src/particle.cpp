#include "amf/particle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "amf/parallel.hpp"
#include "amf/rng.hpp"

namespace amf {

void InitialLaw::validate() const {
    switch (kind) {
        case InitialLawKind::point:
            if (params.size() != 1 || !(params[0] > 0.0)) throw std::invalid_argument("point law needs z > 0");
            return;
        case InitialLawKind::lognormal:
            if (params.size() != 2 || !(params[1] >= 0.0)) throw std::invalid_argument("lognormal law needs (m, s >= 0)");
            return;
        case InitialLawKind::uniform:
            if (params.size() != 2 || !(params[0] >= 0.0) || !(params[1] > params[0])) {
                throw std::invalid_argument("uniform law needs 0 <= a < b");
            }
            return;
        case InitialLawKind::tabulated_quantile:
            if (quantiles.size() < 2) throw std::invalid_argument("quantile table needs at least two values");
            if (!(quantiles.front() >= 0.0) || !std::is_sorted(quantiles.begin(), quantiles.end())) {
                throw std::invalid_argument("quantile table must be nondecreasing and nonnegative");
            }
            return;
    }
}

double InitialLaw::sample(double normal, double uniform) const {
    switch (kind) {
        case InitialLawKind::point: return params[0];
        case InitialLawKind::lognormal: return std::exp(params[0] + params[1] * normal);
        case InitialLawKind::uniform: return params[0] + (params[1] - params[0]) * uniform;
        case InitialLawKind::tabulated_quantile: {
            const double pos = uniform * static_cast<double>(quantiles.size() - 1);
            const auto i = std::min(static_cast<std::size_t>(pos), quantiles.size() - 2);
            const double w = pos - static_cast<double>(i);
            return quantiles[i] * (1.0 - w) + quantiles[i + 1] * w;
        }
    }
    throw std::invalid_argument("unknown initial law");
}

double InitialLaw::upper_extent() const {
    switch (kind) {
        case InitialLawKind::point: return params[0];
        case InitialLawKind::lognormal: return std::exp(params[0] + 5.3 * params[1]);
        case InitialLawKind::uniform: return params[1];
        case InitialLawKind::tabulated_quantile: return quantiles.back();
    }
    return 0.0;
}

void SimConfig::validate() const {
    if (n_particles < 1) throw std::invalid_argument("n_particles must be >= 1");
    if (!(horizon > 0.0) || n_steps < 1) throw std::invalid_argument("horizon and n_steps must be positive");
    validate_kernel(kernel);
    initial_law.validate();
    if (!(dt() * kernel.sup_bound < 0.1)) throw std::invalid_argument("stability guard violated: dt * ||b|| >= 0.1");
    for (auto s : record_steps) {
        if (s > n_steps) throw std::invalid_argument("record step beyond n_steps");
    }
}

std::span<const double> ParticlePaths::at_step(std::size_t k) const {
    const auto it = std::lower_bound(recorded_steps.begin(), recorded_steps.end(), k);
    if (it == recorded_steps.end() || *it != k) throw std::invalid_argument("time step was not recorded");
    const auto row = static_cast<std::size_t>(it - recorded_steps.begin());
    return {positions.data() + row * n(), n()};
}

std::vector<double> ParticlePaths::survival() const {
    std::vector<double> alive(config.n_steps + 1, 0.0);
    for (auto a : absorption_step) {
        for (std::size_t k = 0; k < std::min(a, config.n_steps + 1); ++k) alive[k] += 1.0;
    }
    for (auto& v : alive) v /= static_cast<double>(n());
    return alive;
}

double GirsanovWeight::weight() const { return std::exp(log_weight); }

namespace {

bool needs_sorted_sources(KernelFamily f) {
    return f != KernelFamily::zero && f != KernelFamily::constant;
}

ParticlePaths run_system(const SimConfig& cfg, std::size_t r, std::span<const double> initial,
                         std::span<const std::uint64_t> streams) {
    cfg.validate();
    const std::size_t N = cfg.n_particles, M = cfg.n_steps;
    if (initial.size() != N || streams.size() != N) throw std::invalid_argument("initial/stream size mismatch");
    for (double z : initial) {
        if (!(z > 0.0)) throw std::invalid_argument("non-positive initial sample");
    }

    ParticlePaths out;
    out.config = cfg;
    out.reference_count = r;
    out.stream_ids.assign(streams.begin(), streams.end());
    out.absorption_step.assign(N, M + 1);
    if (cfg.record_steps.empty()) {
        out.recorded_steps.resize(M + 1);
        std::iota(out.recorded_steps.begin(), out.recorded_steps.end(), std::size_t{0});
    } else {
        out.recorded_steps = cfg.record_steps;
        std::sort(out.recorded_steps.begin(), out.recorded_steps.end());
        out.recorded_steps.erase(std::unique(out.recorded_steps.begin(), out.recorded_steps.end()),
                                 out.recorded_steps.end());
    }
    out.positions.reserve(out.recorded_steps.size() * N);
    std::size_t next_record = 0;
    auto record = [&](std::size_t k, const std::vector<double>& x) {
        if (next_record < out.recorded_steps.size() && out.recorded_steps[next_record] == k) {
            out.positions.insert(out.positions.end(), x.begin(), x.end());
            ++next_record;
        }
    };

    std::vector<double> x(initial.begin(), initial.end());
    std::vector<double> drift(N, 0.0), sources, ones;
    std::vector<std::size_t> targets;
    record(0, x);
    const double dt = cfg.dt(), sdt = std::sqrt(2.0 * dt);
    const bool sorted = needs_sorted_sources(cfg.kernel.family);

    for (std::size_t k = 0; k < M; ++k) {
        const double t = static_cast<double>(k) * dt;
        // interacting block: particles r..N-1 (r = 0 for the full system)
        sources.clear();
        targets.clear();
        for (std::size_t i = r; i < N; ++i) {
            if (k < out.absorption_step[i]) {
                sources.push_back(x[i]);
                targets.push_back(i);
            }
        }
        if (sorted) std::sort(sources.begin(), sources.end());
        ones.assign(sources.size(), 1.0);
        std::vector<double> tx(targets.size()), td(targets.size());
        for (std::size_t a = 0; a < targets.size(); ++a) tx[a] = x[targets[a]];
        parallel_for(targets.size(), cfg.threads, [&](std::size_t b, std::size_t e) {
            weighted_drift(cfg.kernel, t, std::span(tx).subspan(b, e - b), sources, ones,
                           static_cast<double>(N), std::span(td).subspan(b, e - b));
        });
        std::fill(drift.begin(), drift.end(), 0.0);
        for (std::size_t a = 0; a < targets.size(); ++a) {
            drift[targets[a]] = td[a];
            out.max_abs_drift = std::max(out.max_abs_drift, std::abs(td[a]));
        }

        parallel_for(N, cfg.threads, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                if (k >= out.absorption_step[i]) continue;
                const auto d = stream_draw(cfg.seed, streams[i], k);
                const double x0 = x[i];
                const double x1 = x0 + drift[i] * dt + sdt * d.normal;
                bool hit = x1 <= 0.0;
                // Brownian-bridge exit probability for diffusion coefficient sqrt(2)
                if (!hit && cfg.bridge_correction) hit = d.uniform < std::exp(-x0 * x1 / dt);
                if (hit) {
                    x[i] = 0.0;
                    out.absorption_step[i] = k + 1;
                } else {
                    x[i] = x1;
                }
            }
        });
        record(k + 1, x);
    }
    return out;
}

std::vector<double> draw_initial(const SimConfig& cfg, std::span<const std::uint64_t> streams) {
    cfg.initial_law.validate();
    std::vector<double> z(streams.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const auto d = stream_draw(cfg.seed, streams[i], kInitialDrawTag);
        z[i] = cfg.initial_law.sample(d.normal, d.uniform);
    }
    return z;
}

std::vector<std::uint64_t> default_streams(std::size_t n) {
    std::vector<std::uint64_t> s(n);
    std::iota(s.begin(), s.end(), std::uint64_t{0});
    return s;
}

}  // namespace

ParticlePaths simulate(const SimConfig& config) {
    const auto streams = default_streams(config.n_particles);
    const auto z = draw_initial(config, streams);
    return run_system(config, 0, z, streams);
}

ParticlePaths simulate(const SimConfig& config, std::span<const double> initial,
                       std::span<const std::uint64_t> streams) {
    return run_system(config, 0, initial, streams);
}

ParticlePaths simulate_reference(const SimConfig& config, std::size_t r) {
    if (r < 1 || r > config.n_particles) throw std::invalid_argument("reference count r out of range");
    const auto streams = default_streams(config.n_particles);
    const auto z = draw_initial(config, streams);
    return run_system(config, r, z, streams);
}

GirsanovWeight girsanov_weight(const ParticlePaths& ref, std::size_t r, const KernelSpec& kernel) {
    if (ref.reference_count != r) throw std::invalid_argument("reference count r does not match the paths");
    if (ref.stream_ids.size() != ref.n()) throw std::invalid_argument("paths carry no rng manifest");
    if (!ref.has_all_steps()) throw std::invalid_argument("girsanov weight needs every step recorded");
    const std::size_t N = ref.n(), M = ref.config.n_steps;
    const double dt = ref.config.dt(), sqdt = std::sqrt(dt);
    const double inv_sigma = 1.0 / std::sqrt(2.0);

    GirsanovWeight w;
    w.r = r;
    std::vector<double> all_src, all_w, ref_src, ref_w, beta(N);
    for (std::size_t k = 0; k < M; ++k) {
        const double t = static_cast<double>(k) * dt;
        const auto x = ref.at_step(k);
        all_src.clear();
        ref_src.clear();
        for (std::size_t j = 0; j < N; ++j) {
            if (!ref.active(j, k)) continue;
            all_src.push_back(x[j]);
            if (j < r) ref_src.push_back(x[j]);
        }
        all_w.assign(all_src.size(), 1.0);
        ref_w.assign(ref_src.size(), 1.0);
        // transformed particles miss their whole interaction; the rest miss the part coming from them
        weighted_drift(kernel, t, x.subspan(0, r), all_src, all_w, static_cast<double>(N), std::span(beta).subspan(0, r));
        weighted_drift(kernel, t, x.subspan(r), ref_src, ref_w, static_cast<double>(N), std::span(beta).subspan(r));
        for (std::size_t i = 0; i < N; ++i) {
            if (!ref.active(i, k)) continue;
            const double dw = sqdt * stream_draw(ref.config.seed, ref.stream_ids[i], k).normal;
            const double theta = beta[i] * inv_sigma;
            w.log_weight += theta * dw - 0.5 * theta * theta * dt;
            w.quadratic_variation += beta[i] * beta[i] * dt;
        }
    }
    return w;
}

namespace {

std::string law_name(InitialLawKind k) {
    switch (k) {
        case InitialLawKind::point: return "point";
        case InitialLawKind::lognormal: return "lognormal";
        case InitialLawKind::uniform: return "uniform";
        case InitialLawKind::tabulated_quantile: return "tabulated-quantile";
    }
    return "?";
}

InitialLawKind law_from_name(const std::string& s) {
    if (s == "point") return InitialLawKind::point;
    if (s == "lognormal") return InitialLawKind::lognormal;
    if (s == "uniform") return InitialLawKind::uniform;
    if (s == "tabulated-quantile") return InitialLawKind::tabulated_quantile;
    throw std::invalid_argument("unknown initial law: " + s);
}

}  // namespace

nlohmann::json to_json(const SimConfig& c) {
    nlohmann::json law{{"kind", law_name(c.initial_law.kind)}, {"params", c.initial_law.params}};
    if (!c.initial_law.quantiles.empty()) law["quantiles"] = c.initial_law.quantiles;
    return {{"n_particles", c.n_particles},     {"horizon", c.horizon},
            {"n_steps", c.n_steps},             {"kernel", to_json(c.kernel)},
            {"initial_law", law},               {"seed", c.seed},
            {"bridge_correction", c.bridge_correction}};
}

SimConfig sim_config_from_json(const nlohmann::json& j, const std::string& base_dir) {
    SimConfig c;
    c.n_particles = j.at("n_particles").get<std::size_t>();
    c.horizon = j.value("horizon", 1.0);
    c.n_steps = j.at("n_steps").get<std::size_t>();
    c.kernel = j.contains("kernel") ? kernel_from_json(j.at("kernel"), base_dir) : KernelSpec::zero();
    if (j.contains("initial_law")) {
        const auto& l = j.at("initial_law");
        c.initial_law.kind = law_from_name(l.at("kind").get<std::string>());
        c.initial_law.params = l.value("params", std::vector<double>{});
        c.initial_law.quantiles = l.value("quantiles", std::vector<double>{});
    }
    c.seed = j.value("seed", std::uint64_t{0});
    c.bridge_correction = j.value("bridge_correction", true);
    c.validate();
    return c;
}

}  // namespace amf
