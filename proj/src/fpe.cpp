#include "amf/fpe.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "amf/particle.hpp"

namespace amf {

std::string to_string(FpeScheme s) {
    return s == FpeScheme::implicit_upwind ? "implicit-upwind" : "crank-nicolson-upwind";
}

FpeScheme fpe_scheme_from_string(const std::string& s) {
    if (s == "implicit-upwind") return FpeScheme::implicit_upwind;
    if (s == "crank-nicolson-upwind") return FpeScheme::crank_nicolson_upwind;
    throw std::invalid_argument("unknown FPE scheme: " + s);
}

void FpeConfig::validate(double drift_sup) const {
    if (!(h > 0.0) || !(k > 0.0) || !(horizon > 0.0) || !(x_max > 2.0 * h)) {
        throw std::invalid_argument("FPE steps, horizon and domain must be positive");
    }
    const auto space = space_grid();
    if (initial.size() != space.size()) throw std::invalid_argument("initial density does not match the space grid");
    for (double v : initial) {
        if (!(v >= 0.0)) throw std::invalid_argument("initial density must be nonnegative");
    }
    if (!(initial_mass > 0.0 && initial_mass <= 1.0 + 1e-8) ||
        std::abs(trapezoid(initial, space.step) - initial_mass) > 1e-8) {
        throw std::invalid_argument("initial density mass does not match initial_mass");
    }
    if (drift_sup * time_grid().step / space.step > 1.0) throw std::invalid_argument("drift CFL guard violated");
    if (!(diffusivity > 0.0)) throw std::invalid_argument("diffusivity must be positive");
}

double recommended_x_max(double z_max, double horizon, double drift_sup) {
    // N(0,1) tail beyond 6.5 is 4e-11
    return std::ceil(z_max + 6.5 * std::sqrt(2.0 * horizon) + drift_sup * horizon);
}

std::vector<double> gaussian_density(double center, double width, const UniformGrid& space) {
    std::vector<double> r(space.size());
    for (std::size_t j = 1; j + 1 < r.size(); ++j) {
        const double d = (space.at(j) - center) / width;
        r[j] = std::exp(-0.5 * d * d);
    }
    const double m = trapezoid(r, space.step);
    if (!(m > 0.0)) throw std::invalid_argument("gaussian density not resolved on the grid");
    for (auto& v : r) v /= m;
    return r;
}

std::vector<double> initial_density(const InitialLaw& law, const UniformGrid& space, double point_width) {
    law.validate();
    if (law.kind == InitialLawKind::point) return gaussian_density(law.params[0], point_width, space);
    std::vector<double> r(space.size(), 0.0);
    for (std::size_t j = 1; j + 1 < r.size(); ++j) {
        const double x = space.at(j);
        switch (law.kind) {
            case InitialLawKind::lognormal: {
                const double m = law.params[0], s = law.params[1];
                const double d = (std::log(x) - m) / s;
                r[j] = std::exp(-0.5 * d * d) / (x * s * std::sqrt(2.0 * std::numbers::pi));
                break;
            }
            case InitialLawKind::uniform:
                r[j] = (x >= law.params[0] && x <= law.params[1]) ? 1.0 : 0.0;
                break;
            case InitialLawKind::tabulated_quantile: {
                const auto& q = law.quantiles;
                const double dp = 1.0 / static_cast<double>(q.size() - 1);
                for (std::size_t i = 0; i + 1 < q.size(); ++i) {
                    if (x >= q[i] && x < q[i + 1]) r[j] = dp / (q[i + 1] - q[i]);
                }
                break;
            }
            case InitialLawKind::point: break;
        }
    }
    const double m = trapezoid(r, space.step);
    if (!(m > 0.0)) throw std::invalid_argument("initial law not resolved on the grid");
    for (auto& v : r) v /= m;
    return r;
}

FrozenDrift::FrozenDrift(UniformGrid time_, UniformGrid space_, std::vector<double> table_)
    : time(time_), space(space_), table(std::move(table_)) {
    if (table.size() != time.size() * space.size()) throw std::invalid_argument("drift table size mismatch");
    for (double v : table) sup_bound = std::max(sup_bound, std::abs(v));
}

double FrozenDrift::operator()(double t, double x) const {
    auto locate = [](const UniformGrid& g, double v) -> std::pair<std::size_t, double> {
        if (g.intervals == 0) return {0, 0.0};
        const double r = std::clamp((v - g.start) / g.step, 0.0, static_cast<double>(g.intervals));
        const auto i = std::min(static_cast<std::size_t>(r), g.intervals - 1);
        return {i, r - static_cast<double>(i)};
    };
    const auto [it, wt] = locate(time, t);
    const auto [ix, wx] = locate(space, x);
    const std::size_t it1 = std::min(it + 1, time.intervals), ix1 = std::min(ix + 1, space.intervals);
    const auto n = space.size();
    const double a = table[it * n + ix] * (1 - wx) + table[it * n + ix1] * wx;
    const double b = table[it1 * n + ix] * (1 - wx) + table[it1 * n + ix1] * wx;
    return a * (1 - wt) + b * wt;
}

FrozenDrift FrozenDrift::constant(const UniformGrid& time, const UniformGrid& space, double c) {
    return FrozenDrift(time, space, std::vector<double>(time.size() * space.size(), c));
}

namespace {

// Tridiagonal generator L = D d_xx - d_x(B .) on interior nodes 1..J-1, with face-upwinded
// advective fluxes F_{j+1/2} = max(B,0) u_j + min(B,0) u_{j+1}, B at faces = node average.
struct Tridiag {
    std::vector<double> lo, di, up;
};

Tridiag generator(std::span<const double> B, double h, double D) {
    const std::size_t J = B.size() - 1;
    Tridiag L{std::vector<double>(J + 1, 0.0), std::vector<double>(J + 1, 0.0), std::vector<double>(J + 1, 0.0)};
    const double dh2 = D / (h * h);
    for (std::size_t j = 1; j < J; ++j) {
        const double bl = 0.5 * (B[j - 1] + B[j]), br = 0.5 * (B[j] + B[j + 1]);
        L.lo[j] = dh2 + std::max(bl, 0.0) / h;
        L.di[j] = -2.0 * dh2 - std::max(br, 0.0) / h + std::min(bl, 0.0) / h;
        L.up[j] = dh2 - std::min(br, 0.0) / h;
    }
    return L;
}

// Solves (I - a L) x = rhs on interior nodes, boundary nodes fixed at 0 (Thomas algorithm).
void implicit_solve(const Tridiag& L, double a, std::vector<double>& rhs) {
    const std::size_t J = rhs.size() - 1;
    std::vector<double> c(J + 1, 0.0), d(J + 1, 0.0);
    for (std::size_t j = 1; j < J; ++j) {
        const double lo = (j > 1) ? -a * L.lo[j] : 0.0;
        const double di = 1.0 - a * L.di[j];
        const double up = (j + 1 < J) ? -a * L.up[j] : 0.0;
        const double den = di - lo * c[j - 1];
        c[j] = up / den;
        d[j] = (rhs[j] - lo * d[j - 1]) / den;
    }
    rhs[0] = 0.0;
    rhs[J] = 0.0;
    for (std::size_t j = J - 1; j >= 1; --j) {
        rhs[j] = d[j] - c[j] * (j + 1 < J ? rhs[j + 1] : 0.0);
    }
}

std::vector<double> apply_explicit(const Tridiag& L, double a, std::span<const double> u) {
    const std::size_t J = u.size() - 1;
    std::vector<double> out(J + 1, 0.0);
    for (std::size_t j = 1; j < J; ++j) {
        out[j] = u[j] + a * (L.lo[j] * u[j - 1] + L.di[j] * u[j] + L.up[j] * u[j + 1]);
    }
    return out;
}

// Supplies the drift rows for step n -> n+1: (row at t_n, row at t_{n+1}).
using DriftProvider = std::function<std::pair<std::vector<double>, std::vector<double>>(
    std::size_t n, std::span<const double> u_n, double beta_n)>;

DensityFlow march(const FpeConfig& cfg, const DriftProvider& drift_rows, bool guard_growth) {
    const auto time = cfg.time_grid();
    const auto space = cfg.space_grid();
    DensityFlow flow(time, space);
    auto r0 = flow.row(0);
    std::copy(cfg.initial.begin(), cfg.initial.end(), r0.begin());
    r0.front() = 0.0;
    r0.back() = 0.0;
    flow.beta[0] = trapezoid(r0, space.step);

    const double dt = time.step, h = space.step, D = cfg.diffusivity;
    for (std::size_t n = 0; n < time.intervals; ++n) {
        const auto un = flow.row(n);
        const auto [bn, bn1] = drift_rows(n, un, flow.beta[n]);
        std::vector<double> next;
        const bool cn = cfg.scheme == FpeScheme::crank_nicolson_upwind;
        if (!cn) {
            next.assign(un.begin(), un.end());
            implicit_solve(generator(bn, h, D), dt, next);
        } else if (n < cfg.rannacher_steps) {
            next.assign(un.begin(), un.end());
            const auto L = generator(bn, h, D);
            implicit_solve(L, 0.5 * dt, next);
            implicit_solve(L, 0.5 * dt, next);
        } else {
            next = apply_explicit(generator(bn, h, D), 0.5 * dt, un);
            implicit_solve(generator(bn1, h, D), 0.5 * dt, next);
        }
        double clipped = 0.0;
        for (double& v : next) {
            if (v < 0.0) {
                if (v < -1e-12) throw std::runtime_error("FPE scheme failure: negative density");
                clipped -= v;
                v = 0.0;
            }
        }
        if (clipped * h > 1e-10) throw std::runtime_error("FPE scheme failure: clipped mass too large");
        auto row = flow.row(n + 1);
        std::copy(next.begin(), next.end(), row.begin());
        flow.beta[n + 1] = trapezoid(row, h);
        if (guard_growth && flow.beta[n + 1] > flow.beta[n] + 1e-8) {
            throw std::runtime_error("nonlinear FPE diverged: survival mass increased");
        }
    }
    return flow;
}

}  // namespace

DensityFlow solve_linear_fpe(const FpeConfig& cfg, const FrozenDrift& drift) {
    const auto time = cfg.time_grid();
    const auto space = cfg.space_grid();
    if (!drift.time.same_as(time, 1e-9) || !drift.space.same_as(space, 1e-9)) {
        throw std::invalid_argument("drift table grid is incompatible with the FPE grid");
    }
    cfg.validate(drift.sup_bound);
    return march(
        cfg,
        [&](std::size_t n, std::span<const double>, double) {
            const auto a = drift.row(n), b = drift.row(n + 1);
            return std::pair{std::vector<double>(a.begin(), a.end()), std::vector<double>(b.begin(), b.end())};
        },
        false);
}

NonlinearSolution solve_nonlinear_fpe(const FpeConfig& cfg, const KernelSpec& kernel) {
    validate_kernel(kernel);
    cfg.validate(kernel.sup_bound);
    const auto time = cfg.time_grid();
    const auto space = cfg.space_grid();
    std::vector<double> table(time.size() * space.size(), 0.0);
    auto assemble = [&](std::size_t n, std::span<const double> u, double beta) {
        auto row = mean_field_drift_row(kernel, time.at(n), u, space, std::min(beta, 1.0));
        std::copy(row.begin(), row.end(), table.begin() + static_cast<std::ptrdiff_t>(n * space.size()));
        return row;
    };
    auto flow = march(
        cfg,
        [&](std::size_t n, std::span<const double> u, double beta) {
            auto row = assemble(n, u, beta);
            return std::pair{row, row};  // lagged: the step-n drift also stands in for t_{n+1}
        },
        true);
    assemble(time.intervals, flow.row(time.intervals), flow.beta.back());
    return {std::move(flow), FrozenDrift(time, space, std::move(table))};
}

double boundary_flux(const DensityFlow& flow, std::size_t k) {
    if (flow.space.size() < 3) throw std::invalid_argument("boundary flux needs at least 3 spatial nodes");
    if (k < 1 || k >= flow.time.size()) throw std::out_of_range("boundary flux time index out of range");
    const auto u = flow.row(k);
    const double dudx = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * flow.space.step);
    if (dudx < -kFluxSignTolerance) throw std::runtime_error("negative boundary slope: density sign violated");
    return -dudx;
}

nlohmann::json to_json(const FpeConfig& c) {
    return {{"h", c.h}, {"k", c.k}, {"x_max", c.x_max}, {"horizon", c.horizon}, {"t_start", c.t_start},
            {"scheme", to_string(c.scheme)}, {"diffusivity", c.diffusivity}};
}

FpeConfig fpe_config_from_json(const nlohmann::json& j, double drift_sup) {
    FpeConfig c;
    c.h = j.at("h").get<double>();
    c.k = j.at("k").get<double>();
    c.horizon = j.value("horizon", 1.0);
    c.scheme = fpe_scheme_from_string(j.value("scheme", std::string("implicit-upwind")));
    const auto& init = j.at("initial");
    const auto kind = init.at("kind").get<std::string>();
    InitialLaw law;
    double width = init.value("point_width", 0.0);
    double z_max = 0.0;
    if (kind == "gaussian") {
        law = InitialLaw::point(init.at("center").get<double>());
        width = init.at("width").get<double>();
        z_max = law.params[0] + 8.0 * width;
    } else if (kind == "tabulated") {
        const auto xs = init.at("x").get<std::vector<double>>();
        if (xs.empty()) throw std::invalid_argument("tabulated initial density needs nodes");
        z_max = xs.back();
    } else {
        nlohmann::json lj = init;
        law = sim_config_from_json({{"n_particles", 1}, {"n_steps", 1}, {"initial_law", lj}}).initial_law;
        z_max = law.upper_extent();
    }
    c.x_max = j.contains("x_max") ? j.at("x_max").get<double>() : recommended_x_max(z_max, c.horizon, drift_sup);
    const auto space = c.space_grid();
    if (kind == "tabulated") {
        const auto xs = init.at("x").get<std::vector<double>>();
        const auto ds = init.at("density").get<std::vector<double>>();
        if (xs.size() != ds.size() || xs.size() < 2) throw std::invalid_argument("tabulated initial density is malformed");
        c.initial.assign(space.size(), 0.0);
        for (std::size_t jn = 1; jn + 1 < space.size(); ++jn) {
            const double x = space.at(jn);
            const auto it = std::upper_bound(xs.begin(), xs.end(), x);
            if (it == xs.begin() || it == xs.end()) continue;
            const auto i = static_cast<std::size_t>(it - xs.begin()) - 1;
            const double w = (x - xs[i]) / (xs[i + 1] - xs[i]);
            c.initial[jn] = ds[i] * (1 - w) + ds[i + 1] * w;
        }
        const double m = trapezoid(c.initial, space.step);
        if (!(m > 0.0)) throw std::invalid_argument("tabulated initial density has no mass on the grid");
        for (auto& v : c.initial) v /= m;
    } else {
        if (law.kind == InitialLawKind::point && !(width > 0.0)) width = 4.0 * space.step;
        c.initial = initial_density(law, space, width);
    }
    return c;
}

}  // namespace amf
