#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "amf/meanfield.hpp"

using namespace amf;
using boost::math::quadrature::gauss_kronrod;

namespace {

FpeConfig config(double h, double k, double horizon, double width = 0.1, FpeScheme s = FpeScheme::implicit_upwind) {
    FpeConfig c;
    c.h = h;
    c.k = k;
    c.x_max = 8.0;
    c.horizon = horizon;
    c.scheme = s;
    c.initial = gaussian_density(1.0, width, c.space_grid());
    return c;
}

FlowPair free_pair(const FpeConfig& c) {
    return FlowPair::from_flow(solve_linear_fpe(c, FrozenDrift::zero(c.time_grid(), c.space_grid())));
}

double terminal_l1(const DensityFlow& f, double (*oracle)(double)) {
    double s = 0.0;
    const auto row = f.row(f.time.intervals);
    for (std::size_t j = 0; j < row.size(); ++j) s += std::abs(row[j] - oracle(f.space.at(j))) * f.space.step;
    return s;
}

}  // namespace

TEST_CASE("oracles") {
    const double inf = std::numeric_limits<double>::infinity();
    SUBCASE("stopped Brownian motion") {
        const auto o = stopped_bm_oracle(1.0, 0.7);
        CHECK(o.alpha == doctest::Approx(std::erf(1.0 / (2 * std::sqrt(0.7)))));
        const double mass = gauss_kronrod<double, 61>::integrate([&](double y) { return o.density(y); }, 0.0, inf, 15, 1e-13);
        CHECK(mass == doctest::Approx(o.alpha).epsilon(1e-10));
        CHECK(o.density(0.0) == 0.0);
        CHECK(o.density(-1.0) == 0.0);
        CHECK(drifted_killed_density(1.0, 0.0, 0.7, 0.4) == doctest::Approx(o.density(0.4)).epsilon(1e-14));
        CHECK_THROWS_AS(stopped_bm_oracle(0.0, 1.0), std::invalid_argument);
    }
    SUBCASE("constant drift: mass, boundary value and the forward equation") {
        for (double c : {-0.7, 0.5}) {
            const double z = 0.8, t = 0.6;
            const double mass = gauss_kronrod<double, 61>::integrate(
                [&](double y) { return drifted_killed_density(z, c, t, y); }, 0.0, inf, 15, 1e-13);
            CHECK(mass == doctest::Approx(drifted_killed_survival(z, c, t)).epsilon(1e-10));
            CHECK(std::abs(drifted_killed_density(z, c, t, 1e-12)) < 1e-10);
            const double y = 1.1, e = 1e-4;
            auto p = [&](double tt, double yy) { return drifted_killed_density(z, c, tt, yy); };
            const double pt = (p(t + e, y) - p(t - e, y)) / (2 * e);
            const double py = (p(t, y + e) - p(t, y - e)) / (2 * e);
            const double pyy = (p(t, y + e) - 2 * p(t, y) + p(t, y - e)) / (e * e);
            CHECK(std::abs(pt - (pyy - c * py)) < 1e-5);
        }
    }
    SUBCASE("Gaussian start equals the convolution of point starts") {
        const double z = 1.0, w = 0.15, c = 0.4, t = 0.3;
        for (double y : {0.2, 0.9, 1.7}) {
            const double conv = gauss_kronrod<double, 61>::integrate(
                [&](double x) {
                    const double g = std::exp(-0.5 * (x - z) * (x - z) / (w * w)) / (w * std::sqrt(2 * std::numbers::pi));
                    return g * drifted_killed_density(x, c, t, y);
                },
                1e-9, inf, 15, 1e-13);
            // the Gaussian's mass below 0 (about 1e-11) is neglected by the closed form
            CHECK(drifted_killed_density_gaussian(z, w, c, t, y) == doctest::Approx(conv).epsilon(1e-8));
        }
    }
    SUBCASE("grid measure") {
        const UniformGrid g{0.0, 0.01, 1000};
        const auto m = stopped_bm_measure(1.0, 0.5, g);
        CHECK(m.density.front() == 0.0);
        CHECK(m.beta == doctest::Approx(trapezoid(m.density, g.step)));
        CHECK(m.beta == doctest::Approx(std::erf(1.0 / (2 * std::sqrt(0.5)))).epsilon(1e-4));
        CHECK(m.view().beta == m.beta);
    }
}

TEST_CASE("the atom at 0 is erased by the survival curve") {
    // With f = 1 the constant kernel c gives B = c no matter what the flow is.
    const auto c = config(1e-2, 1e-2, 1.0);
    auto pair = free_pair(c);
    std::fill(pair.survival.alpha.begin(), pair.survival.alpha.end(), 1.0);
    const auto B = frozen_drift(pair, KernelSpec::constant(0.5));
    for (double v : B.table) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    const auto out = gamma_operator(pair, KernelSpec::constant(0.5), c);
    CHECK(out.survival.alpha == out.flow.beta);
    for (std::size_t k = 1; k < out.flow.beta.size(); ++k) CHECK(out.flow.beta[k] <= out.flow.beta[k - 1]);
    static constexpr auto oracle = [](double y) { return drifted_killed_density_gaussian(1.0, 0.1, 0.5, 1.0, y); };
    CHECK(terminal_l1(out.flow, +oracle) < 1e-2);
    // with f = beta the same kernel gives c * beta
    const auto own = frozen_drift(free_pair(c), KernelSpec::constant(0.5));
    for (std::size_t k = 0; k < own.time.size(); ++k) CHECK(own.row(k)[7] == doctest::Approx(0.5 * pair.flow.beta[k]));
}

TEST_CASE("Picard iteration") {
    SUBCASE("zero kernel: the starting flow is already the fixed point") {
        const auto c = config(1e-2, 1e-2, 1.0);
        const auto r = picard_solve(KernelSpec::zero(), c);
        CHECK(r.iterations == 1);
        CHECK(r.trace[0] == 0.0);
        CHECK(r.pair.flow.u == free_pair(c).flow.u);
    }
    SUBCASE("agrees with the nonlinear solver") {
        for (const auto& kernel : {KernelSpec::constant(1.0), KernelSpec::rational_attractive(1.0)}) {
            const auto c = config(1e-2, 5e-3, 1.0);
            const auto r = picard_solve(kernel, c, {1e-10, 100, 1.0, 0});
            const auto n = solve_nonlinear_fpe(c, kernel);
            double worst = 0.0;
            for (std::size_t k = 0; k < n.flow.beta.size(); ++k) {
                worst = std::max(worst, std::abs(n.flow.beta[k] - r.pair.flow.beta[k]));
                CHECK(r.pair.survival.alpha[k] == r.pair.flow.beta[k]);
            }
            CHECK(worst < 1e-8);
            for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] < r.trace[i - 1]);
            CHECK(fixed_point_residual(r.pair, kernel, c) < 1e-9);
            CHECK(fixed_point_residual(free_pair(c), kernel, c) > 1e-3);
        }
    }
    SUBCASE("damping slows but does not change the limit") {
        const auto c = config(2e-2, 1e-2, 1.0);
        const auto k = KernelSpec::rational_attractive(1.0);
        const auto a = picard_solve(k, c, {1e-10, 200, 1.0, 0});
        const auto b = picard_solve(k, c, {1e-10, 200, 0.6, 0});
        CHECK(b.iterations > a.iterations);
        CHECK(pair_distance(a.pair, b.pair) < 1e-8);
    }
    SUBCASE("horizon splitting") {
        // the full horizon needs 7 iterations at this tolerance, each half at most 6
        FpeConfig c;
        c.h = 0.02;
        c.k = 0.005;
        c.x_max = 8.0;
        c.initial = gaussian_density(1.0, 0.1, c.space_grid());
        const auto k = KernelSpec::constant(2.0);
        const auto whole = picard_solve(k, c, {1e-8, 50, 1.0, 0});
        CHECK(whole.segment_end.size() == 1);
        CHECK(whole.iterations == 7);
        const auto split = picard_solve(k, c, {1e-8, 6, 1.0, 1});
        CHECK(split.segment_end == std::vector<std::size_t>{100, 200});
        CHECK(split.pair.flow.time.intervals == 200);
        CHECK(pair_distance(whole.pair, split.pair) < 1e-6);
        CHECK_THROWS_AS(picard_solve(k, c, {1e-8, 6, 1.0, 0}), PicardDivergence);
        try {
            picard_solve(k, c, {1e-8, 1, 1.0, 2});
            CHECK(false);
        } catch (const PicardDivergence& e) {
            CHECK(e.last_distance > 1e-8);
        }
    }
    const auto c = config(1e-2, 1e-2, 1.0);
    CHECK_THROWS_AS(picard_solve(KernelSpec::zero(), c, {0.0, 10, 1.0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(picard_solve(KernelSpec::zero(), c, {1e-8, 10, 1.5, 0}), std::invalid_argument);
    CHECK_THROWS_AS(gamma_operator(free_pair(config(2e-2, 1e-2, 1.0)), KernelSpec::zero(), c), std::invalid_argument);
}

TEST_CASE("contraction on short horizons") {
    const auto c = config(1e-2, 1e-2, 1.0);
    const auto kernel = KernelSpec::rational_attractive(1.0);
    const auto a = free_pair(c);
    const auto b = FlowPair::from_flow(solve_linear_fpe(c, FrozenDrift::constant(c.time_grid(), c.space_grid(), 0.8)));
    const double short_ratio = contraction_ratio(a, b, kernel, c, 10);
    const double long_ratio = contraction_ratio(a, b, kernel, c, 100);
    MESSAGE("contraction ratio up to t=0.1: " << short_ratio << ", up to t=1: " << long_ratio);
    CHECK(short_ratio < 1.0);
    CHECK(short_ratio < long_ratio);
    CHECK_THROWS_AS(contraction_ratio(a, a, kernel, c, 10), std::invalid_argument);
}

TEST_CASE("fixed-point survival is Hoelder with exponent 1/2 away from the start") {
    // on [0.1, 1] the curve is smooth, so refining the time grid leaves the seminorm nearly unchanged
    const auto kernel = KernelSpec::rational_attractive(1.0);
    std::vector<double> semis;
    for (double k : {2e-2, 1e-2, 5e-3}) {
        const auto r = picard_solve(kernel, config(2e-2, k, 1.0), {1e-9, 100, 1.0, 0});
        const auto& a = r.pair.survival;
        const std::size_t first = a.time.index_of(0.1);
        SurvivalCurve tail{UniformGrid{0.1, a.time.step, a.time.intervals - first},
                           std::vector<double>(a.alpha.begin() + static_cast<std::ptrdiff_t>(first), a.alpha.end())};
        semis.push_back(holder_seminorm(tail, 0.5));
    }
    MESSAGE("1/2-Hoelder seminorms: " << semis[0] << ", " << semis[1] << ", " << semis[2]);
    CHECK(std::abs(semis[2] - semis[1]) < 0.05 * semis[1]);
    CHECK(std::abs(semis[1] - semis[0]) < 0.1 * semis[0]);
}
