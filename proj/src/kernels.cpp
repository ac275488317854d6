#include "amf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

namespace amf {

namespace {

std::size_t expected_param_count(KernelFamily f) {
    switch (f) {
        case KernelFamily::zero: return 0;
        case KernelFamily::constant: return 1;
        case KernelFamily::separable_product: return 3;
        case KernelFamily::rational_attractive: return 2;
        case KernelFamily::tabulated: return 0;
    }
    throw std::invalid_argument("unknown kernel family");
}

// Locate `v` in a sorted axis; returns lower index and interpolation weight, clamped.
std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double v) {
    if (axis.size() == 1 || v <= axis.front()) return {0, 0.0};
    if (v >= axis.back()) return {axis.size() - 2, 1.0};
    const auto it = std::upper_bound(axis.begin(), axis.end(), v);
    const auto i = static_cast<std::size_t>(it - axis.begin()) - 1;
    return {i, (v - axis[i]) / (axis[i + 1] - axis[i])};
}

inline double rational(double a, double inv_len, double x, double y) {
    const double d = (x - y) * inv_len;
    return a / (1.0 + d * d);
}

}  // namespace

std::string to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::zero: return "zero";
        case KernelFamily::constant: return "constant";
        case KernelFamily::separable_product: return "separable-product";
        case KernelFamily::rational_attractive: return "rational-attractive";
        case KernelFamily::tabulated: return "tabulated";
    }
    throw std::invalid_argument("unknown kernel family");
}

KernelFamily kernel_family_from_string(const std::string& s) {
    if (s == "zero") return KernelFamily::zero;
    if (s == "constant") return KernelFamily::constant;
    if (s == "separable-product") return KernelFamily::separable_product;
    if (s == "rational-attractive") return KernelFamily::rational_attractive;
    if (s == "tabulated") return KernelFamily::tabulated;
    throw std::invalid_argument("unknown kernel family: " + s);
}

double KernelTable::operator()(double tt, double xx, double yy) const {
    const auto nx = x.size(), ny = y.size();
    const auto [it, wt] = bracket(t, tt);
    const auto [ix, wx] = bracket(x, xx);
    const auto [iy, wy] = bracket(y, yy);
    const std::size_t it1 = std::min(it + 1, t.size() - 1);
    const std::size_t ix1 = std::min(ix + 1, nx - 1);
    const std::size_t iy1 = std::min(iy + 1, ny - 1);
    auto at = [&](std::size_t a, std::size_t b_, std::size_t c) { return b[(a * nx + b_) * ny + c]; };
    auto plane = [&](std::size_t a) {
        const double b0 = at(a, ix, iy) * (1 - wy) + at(a, ix, iy1) * wy;
        const double b1 = at(a, ix1, iy) * (1 - wy) + at(a, ix1, iy1) * wy;
        return b0 * (1 - wx) + b1 * wx;
    };
    return plane(it) * (1 - wt) + plane(it1) * wt;
}

KernelTable KernelTable::read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open kernel table: " + path);
    std::string line;
    std::getline(in, line);
    line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
    if (line != "t,x,y,b") throw std::invalid_argument("kernel table header must be t,x,y,b");
    std::map<std::tuple<double, double, double>, double> cells;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double tt, xx, yy, bb;
        if (!(ss >> tt >> xx >> yy >> bb)) throw std::invalid_argument("bad kernel table row: " + line);
        cells[{tt, xx, yy}] = bb;
    }
    KernelTable tab;
    for (const auto& [k, v] : cells) {
        tab.t.push_back(std::get<0>(k));
        tab.x.push_back(std::get<1>(k));
        tab.y.push_back(std::get<2>(k));
    }
    for (auto* axis : {&tab.t, &tab.x, &tab.y}) {
        std::sort(axis->begin(), axis->end());
        axis->erase(std::unique(axis->begin(), axis->end()), axis->end());
    }
    if (tab.t.empty() || cells.size() != tab.t.size() * tab.x.size() * tab.y.size()) {
        throw std::invalid_argument("kernel table is not a full (t,x,y) lattice");
    }
    tab.b.reserve(cells.size());
    for (const auto& [k, v] : cells) tab.b.push_back(v);  // map order is (t, x, y) lexicographic
    return tab;
}

KernelSpec KernelSpec::zero() { return KernelSpec{}; }

KernelSpec KernelSpec::constant(double c) {
    KernelSpec s;
    s.family = KernelFamily::constant;
    s.params = {c};
    s.sup_bound = std::abs(c);
    return s;
}

KernelSpec KernelSpec::separable_product(double a, double kx, double ky) {
    KernelSpec s;
    s.family = KernelFamily::separable_product;
    s.params = {a, kx, ky};
    s.sup_bound = std::abs(a);
    return s;
}

KernelSpec KernelSpec::rational_attractive(double a, double length) {
    KernelSpec s;
    s.family = KernelFamily::rational_attractive;
    s.params = {a, length};
    s.sup_bound = std::abs(a);
    return s;
}

KernelSpec KernelSpec::tabulated(KernelTable table, double sup_bound, double holder_exponent) {
    KernelSpec s;
    s.family = KernelFamily::tabulated;
    s.sup_bound = sup_bound;
    s.holder_exponent = holder_exponent;
    s.table = std::make_shared<const KernelTable>(std::move(table));
    return s;
}

void validate_kernel(const KernelSpec& spec) {
    if (spec.params.size() != expected_param_count(spec.family)) {
        throw std::invalid_argument("kernel '" + to_string(spec.family) + "' expects " +
                                    std::to_string(expected_param_count(spec.family)) + " parameters");
    }
    if (!(spec.sup_bound >= 0.0) || !std::isfinite(spec.sup_bound)) {
        throw std::invalid_argument("kernel sup_bound must be finite and nonnegative");
    }
    if (spec.family == KernelFamily::zero && spec.sup_bound != 0.0) {
        throw std::invalid_argument("zero kernel must declare sup_bound = 0");
    }
    if (!(spec.holder_exponent > 0.0 && spec.holder_exponent <= 1.0)) {
        throw std::invalid_argument("holder_exponent must lie in (0, 1]");
    }
    if (spec.family == KernelFamily::rational_attractive && !(spec.params[1] > 0.0)) {
        throw std::invalid_argument("rational-attractive length must be positive");
    }
    if (spec.family == KernelFamily::tabulated && !spec.table) {
        throw std::invalid_argument("tabulated kernel has no table");
    }
    if (spec.family == KernelFamily::tabulated) {
        for (double v : spec.table->b) {
            if (std::abs(v) > spec.sup_bound) throw std::invalid_argument("kernel table exceeds sup_bound");
        }
    }
    // The probe is deterministic, so a spec that passed it once passes again; replicated runs
    // re-validate the same spec many times.
    struct Probed {
        KernelFamily family;
        std::vector<double> params;
        double sup_bound;
        const KernelTable* table;
        bool operator==(const Probed&) const = default;
    };
    thread_local std::optional<Probed> last;
    const Probed key{spec.family, spec.params, spec.sup_bound, spec.table.get()};
    if (last && *last == key) return;
    std::mt19937_64 gen(0x5eedb0b5ULL);
    std::uniform_real_distribution<double> ut(0.0, 10.0), ux(-2.0, 30.0);
    for (int n = 0; n < 100000; ++n) {
        const double t = ut(gen), x = ux(gen), y = ux(gen);
        if (std::abs(eval_kernel(spec, t, x, y)) > spec.sup_bound) {
            throw std::invalid_argument("kernel violates its declared sup_bound");
        }
    }
    last = key;
}

double eval_kernel(const KernelSpec& spec, double t, double x, double y) {
    if (t < 0.0) throw std::invalid_argument("kernel evaluated at negative time");
    const auto& p = spec.params;
    if (p.size() != expected_param_count(spec.family)) {
        throw std::invalid_argument("kernel parameter count mismatch");
    }
    switch (spec.family) {
        case KernelFamily::zero: return 0.0;
        case KernelFamily::constant: return p[0];
        case KernelFamily::separable_product: return p[0] * std::tanh(p[1] * x) * std::tanh(p[2] * y);
        case KernelFamily::rational_attractive: return rational(p[0], 1.0 / p[1], x, y);
        case KernelFamily::tabulated:
            if (!spec.table) throw std::invalid_argument("tabulated kernel has no table");
            return (*spec.table)(t, x, y);
    }
    throw std::invalid_argument("unknown kernel family");
}

double interaction_drift(const KernelSpec& spec, double t, double x, double atom_mass,
                         std::span<const double> density, const UniformGrid& space, double a) {
    if (density.size() != space.size()) throw std::invalid_argument("density does not match grid");
    std::vector<double> f(density.size());
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = eval_kernel(spec, t, x, space.at(j)) * density[j];
    const double b0 = eval_kernel(spec, t, x, 0.0);
    return trapezoid(f, space.step) + b0 * atom_mass - b0 * (1.0 - a);
}

namespace {

void check_density(std::span<const double> density, const UniformGrid& space, double beta, double mass_tol) {
    if (density.size() != space.size()) throw std::invalid_argument("density does not match grid");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta outside [0,1]");
    for (double v : density) {
        if (v < -1e-12) throw std::invalid_argument("density has negative values");
    }
    if (std::abs(trapezoid(density, space.step) - beta) > mass_tol) {
        throw std::invalid_argument("density mass does not match beta");
    }
}

}  // namespace

double mean_field_drift(const KernelSpec& spec, double t, double x, std::span<const double> density,
                        const UniformGrid& space, double beta, double mass_tol) {
    check_density(density, space, beta, mass_tol);
    std::vector<double> f(density.size());
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = eval_kernel(spec, t, x, space.at(j)) * density[j];
    return trapezoid(f, space.step);
}

std::vector<double> mean_field_drift_row(const KernelSpec& spec, double t,
                                         std::span<const double> density, const UniformGrid& space,
                                         double beta) {
    check_density(density, space, beta, 1e-6);
    const std::size_t n = space.size();
    std::vector<double> xs(n), w(n);
    for (std::size_t j = 0; j < n; ++j) {
        xs[j] = space.at(j);
        // trapezoid weights folded into the source weights
        w[j] = density[j] * space.step * ((j == 0 || j + 1 == n) ? 0.5 : 1.0);
    }
    std::vector<double> out(n);
    weighted_drift(spec, t, xs, xs, w, 1.0, out);
    return out;
}

double empirical_drift(const KernelSpec& spec, double t, std::size_t i, std::span<const double> positions) {
    if (positions.empty()) throw std::invalid_argument("empty position vector");
    if (i >= positions.size()) throw std::invalid_argument("particle index out of range");
    const double xi = positions[i];
    double s = 0.0;
    for (double xj : positions) {
        if (xj > 0.0) s += eval_kernel(spec, t, xi, xj);
    }
    return s / static_cast<double>(positions.size());
}

void weighted_drift(const KernelSpec& spec, double t, std::span<const double> targets,
                    std::span<const double> sources, std::span<const double> weights,
                    double n_total, std::span<double> out) {
    if (sources.size() != weights.size() || targets.size() != out.size()) {
        throw std::invalid_argument("weighted_drift: size mismatch");
    }
    if (t < 0.0) throw std::invalid_argument("kernel evaluated at negative time");
    const double inv_n = 1.0 / n_total;
    const auto& p = spec.params;
    switch (spec.family) {
        case KernelFamily::zero:
            std::fill(out.begin(), out.end(), 0.0);
            return;
        case KernelFamily::constant: {
            double s = 0.0;
            for (double w : weights) s += w;
            std::fill(out.begin(), out.end(), p.at(0) * s * inv_n);
            return;
        }
        case KernelFamily::separable_product: {
            double s = 0.0;
            for (std::size_t j = 0; j < sources.size(); ++j) s += std::tanh(p.at(2) * sources[j]) * weights[j];
            for (std::size_t i = 0; i < targets.size(); ++i) out[i] = p[0] * std::tanh(p[1] * targets[i]) * s * inv_n;
            return;
        }
        case KernelFamily::rational_attractive: {
            const double a = p.at(0), inv_len = 1.0 / p.at(1);
            const std::size_t n = sources.size(), n4 = n - n % 4;
            for (std::size_t i = 0; i < targets.size(); ++i) {
                const double x = targets[i];
                // four fixed-order partial sums keep the result independent of threading
                double acc[4] = {0.0, 0.0, 0.0, 0.0};
                for (std::size_t j = 0; j < n4; j += 4) {
                    for (std::size_t l = 0; l < 4; ++l) {
                        const double d = (x - sources[j + l]) * inv_len;
                        acc[l] += weights[j + l] / (1.0 + d * d);
                    }
                }
                for (std::size_t j = n4; j < n; ++j) {
                    const double d = (x - sources[j]) * inv_len;
                    acc[j - n4] += weights[j] / (1.0 + d * d);
                }
                out[i] = a * ((acc[0] + acc[1]) + (acc[2] + acc[3])) * inv_n;
            }
            return;
        }
        case KernelFamily::tabulated:
            for (std::size_t i = 0; i < targets.size(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < sources.size(); ++j) {
                    if (weights[j] != 0.0) s += eval_kernel(spec, t, targets[i], sources[j]) * weights[j];
                }
                out[i] = s * inv_n;
            }
            return;
    }
}

SmoothIndicator::SmoothIndicator(double eta_) : eta(eta_) {
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
}

double SmoothIndicator::operator()(double x) const noexcept {
    if (x <= 0.0) return 0.0;
    if (x >= eta) return 1.0;
    const double u = x / eta;
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double smooth_indicator(double eta, double x) { return SmoothIndicator(eta)(x); }

nlohmann::json to_json(const KernelSpec& spec) {
    nlohmann::json j{{"family", to_string(spec.family)},
                     {"params", spec.params},
                     {"sup_bound", spec.sup_bound},
                     {"holder_exponent", spec.holder_exponent}};
    if (spec.family == KernelFamily::tabulated) j["table"] = spec.table_path;
    return j;
}

KernelSpec kernel_from_json(const nlohmann::json& j, const std::string& base_dir) {
    KernelSpec s;
    s.family = kernel_family_from_string(j.at("family").get<std::string>());
    s.params = j.value("params", std::vector<double>{});
    s.sup_bound = j.at("sup_bound").get<double>();
    s.holder_exponent = j.value("holder_exponent", 1.0);
    if (s.family == KernelFamily::tabulated) {
        s.table_path = j.at("table").get<std::string>();
        std::filesystem::path p(s.table_path);
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        s.table = std::make_shared<const KernelTable>(KernelTable::read_csv(p.string()));
    }
    validate_kernel(s);
    return s;
}

}  // namespace amf
