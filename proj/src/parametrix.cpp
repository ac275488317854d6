#include "amf/parametrix.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "amf/quadrature.hpp"

namespace amf {

double gaussian_kernel(double r, double z) {
    return std::exp(-z * z / (2.0 * r)) / std::sqrt(2.0 * std::numbers::pi * r);
}

double heat_kernel(double t, double x, double s, double y) { return gaussian_kernel(2.0 * (s - t), y - x); }

namespace {

struct Rules {
    std::vector<double> theta, theta_w;  // Gauss-Legendre mapped to (0, 1)
    std::vector<double> xi, xi_w;        // Gauss-Hermite, weights divided by sqrt(pi)

    Rules(std::size_t nt, std::size_t nz) {
        const auto gl = gauss_legendre(nt);
        for (std::size_t i = 0; i < nt; ++i) {
            theta.push_back(0.5 * (gl.nodes[i] + 1.0));
            theta_w.push_back(0.5 * gl.weights[i]);
        }
        const auto gh = gauss_hermite(nz);
        xi = gh.nodes;
        for (double w : gh.weights) xi_w.push_back(w / std::sqrt(std::numbers::pi));
    }
};

// Ratios R_0..R_depth of the series terms to the heat kernel q(t, x, s, y). With the
// Brownian-bridge factorisation q(t,x,u,z) q(u,z,s,y) = q(t,x,s,y) N(z; m, v):
//   R_k(t,x,s,y) = int du E_{z ~ N(m, v)} [R_{k-1}(t,x,u,z) B(u,z) (y - z) / (2 (s - u))].
std::vector<double> ratios(const FrozenDrift& drift, const Rules& rules, double t, double x, double s, double y,
                           unsigned depth) {
    std::vector<double> R(depth + 1, 0.0);
    R[0] = 1.0;
    if (depth == 0) return R;
    const double tau = s - t;
    for (std::size_t i = 0; i < rules.theta.size(); ++i) {
        const double th = rules.theta[i];
        const double a = std::pow(std::sin(0.5 * std::numbers::pi * th), 2);
        const double u = t + tau * a;
        const double jac = tau * 0.5 * std::numbers::pi * std::sin(std::numbers::pi * th) * rules.theta_w[i];
        const double m = x + a * (y - x);
        const double sd = std::sqrt(4.0 * tau * a * (1.0 - a));
        for (std::size_t j = 0; j < rules.xi.size(); ++j) {
            const double z = m + sd * rules.xi[j];
            const double f = drift(u, z) * (y - z) / (2.0 * tau * (1.0 - a)) * jac * rules.xi_w[j];
            if (f == 0.0) continue;
            const auto inner = ratios(drift, rules, t, x, u, z, depth - 1);
            for (unsigned l = 1; l <= depth; ++l) R[l] += f * inner[l - 1];
        }
    }
    return R;
}

}  // namespace

std::vector<double> parametrix_terms(const FrozenDrift& drift, double t, double x, double s, double y, unsigned K,
                                     const ParametrixOptions& opts) {
    if (!(s > t)) throw std::invalid_argument("parametrix needs s > t");
    const double q = heat_kernel(t, x, s, y);
    std::vector<double> terms(K + 1, 0.0);
    terms[0] = q;
    if (K == 0 || drift.sup_bound == 0.0) return terms;

    const Rules base(opts.time_nodes, opts.space_nodes);
    const auto R = ratios(drift, base, t, x, s, y, K);
    for (unsigned k = 1; k <= K; ++k) terms[k] = q * R[k];
    if (opts.check_convergence) {
        const Rules fine(opts.time_nodes + opts.refine_step, opts.space_nodes + opts.refine_step);
        const auto Rf = ratios(drift, fine, t, x, s, y, K);
        for (unsigned k = 1; k <= K; ++k) {
            if (std::abs(q * (Rf[k] - R[k])) > opts.tol) {
                throw QuadratureError("parametrix quadrature did not converge at term " + std::to_string(k));
            }
        }
    }
    return terms;
}

double parametrix_density(const FrozenDrift& drift, double t, double x, double s, double y, unsigned K,
                          const ParametrixOptions& opts) {
    double sum = 0.0;
    for (double v : parametrix_terms(drift, t, x, s, y, K, opts)) sum += v;
    return sum;
}

namespace {

// G(t_n, .) for n = 0..last on the nodes -x_max..x_max (2J + 1 of them), from
// -d_t v = v_xx + B v_x with v(s, x) = 1{x > 0}, v(s, 0) = 1/2, v(-x_max) = 0, v(x_max) = 1.
std::vector<std::vector<double>> backward_green(const DensityFlow& flow, const FrozenDrift& drift, std::size_t last) {
    const std::size_t J = flow.space.intervals;
    const double h = flow.space.step, k = flow.time.step;
    const std::size_t n_nodes = 2 * J + 1;
    std::vector<std::vector<double>> G(last + 1);
    std::vector<double> v(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) v[i] = i > J ? 1.0 : (i == J ? 0.5 : 0.0);
    G[last] = v;
    std::vector<double> c(n_nodes), d(n_nodes);
    for (std::size_t n = last; n-- > 0;) {
        const double tn = flow.time.at(n);
        // Thomas sweep with v_0 = 0, v_end = 1 folded in.
        c[0] = 0.0;
        d[0] = 0.0;
        for (std::size_t i = 1; i + 1 < n_nodes; ++i) {
            const double x = (static_cast<double>(i) - static_cast<double>(J)) * h;
            const double B = drift(tn, x);
            const double up = -(k / (h * h) + k * std::max(B, 0.0) / h);
            const double lo = -(k / (h * h) + k * std::max(-B, 0.0) / h);
            const double di = 1.0 + 2.0 * k / (h * h) + k * std::abs(B) / h;
            double rhs = v[i];
            if (i + 2 == n_nodes) rhs -= up * 1.0;
            const double upc = (i + 2 == n_nodes) ? 0.0 : up;
            const double den = di - lo * c[i - 1];
            c[i] = upc / den;
            d[i] = (rhs - lo * d[i - 1]) / den;
        }
        v[0] = 0.0;
        v[n_nodes - 1] = 1.0;
        for (std::size_t i = n_nodes - 2; i >= 1; --i) v[i] = d[i] - c[i] * (i + 2 == n_nodes ? 0.0 : v[i + 1]);
        G[n] = v;
    }
    return G;
}

}  // namespace

AlphaResidual alpha_representation_residual(const DensityFlow& flow, const FrozenDrift& drift, double s,
                                            const RepresentationOptions& opts) {
    const std::size_t last = flow.time.index_of(s);
    if (last == 0 || flow.time.start != 0.0) throw std::invalid_argument("representation needs 0 < s on a grid starting at 0");
    const auto rho = flow.row(0);
    const auto& space = flow.space;
    const std::size_t J = space.intervals;

    std::vector<double> g0(space.size(), 0.0);  // G(0, x_j) where rho > 0
    std::vector<double> gb(last + 1, 0.5);      // G(t_n, 0), with G(s, 0) = 1/2
    if (opts.route == GreenRoute::backward_pde) {
        const auto G = backward_green(flow, drift, last);
        for (std::size_t j = 0; j <= J; ++j) g0[j] = G[0][J + j];
        for (std::size_t n = 0; n < last; ++n) gb[n] = G[n][J];
    } else {
        std::vector<double> integrand(space.size());
        auto G = [&](double t, double x) {
            for (std::size_t j = 0; j <= J; ++j) {
                integrand[j] = parametrix_density(drift, t, x, s, space.at(j), opts.K, opts.parametrix);
            }
            return trapezoid(integrand, space.step);
        };
        double rho_max = 0.0;
        for (double r : rho) rho_max = std::max(rho_max, r);
        for (std::size_t j = 0; j <= J; ++j) {
            if (rho[j] > 1e-14 * rho_max) g0[j] = G(0.0, space.at(j));
        }
        for (std::size_t n = 0; n < last; ++n) gb[n] = G(flow.time.at(n), 0.0);
    }

    std::vector<double> weighted(space.size());
    for (std::size_t j = 0; j <= J; ++j) weighted[j] = rho[j] * g0[j];
    const double k = flow.time.step;
    std::vector<double> memory(last + 1);
    for (std::size_t n = 0; n <= last; ++n) {
        double dG;
        if (n == 0) dG = (gb[1] - gb[0]) / k;
        else if (n == last) dG = (gb[n] - gb[n - 1]) / k;
        else dG = (gb[n + 1] - gb[n - 1]) / (2.0 * k);
        memory[n] = flow.beta[n] * dG;
    }
    AlphaResidual r;
    r.lhs = 0.5 * flow.beta[last];
    r.rhs = trapezoid(weighted, space.step) - gb[0] - trapezoid(memory, k);
    r.residual = std::abs(r.lhs - r.rhs);
    return r;
}

}  // namespace amf
