#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "amf/fpe.hpp"
#include "amf/particle.hpp"

using namespace amf;

namespace {

FpeConfig gaussian_config(double h, double k, double z, double width, FpeScheme scheme, double x_max = 8.0) {
    FpeConfig c;
    c.h = h;
    c.k = k;
    c.x_max = x_max;
    c.scheme = scheme;
    c.initial = gaussian_density(z, width, c.space_grid());
    return c;
}

// Free killed density from N(z, w^2): the images difference with variance 2t + w^2.
double images_density(double z, double w, double t, double y) {
    const double s2 = 2.0 * t + w * w;
    const double g = 1.0 / std::sqrt(2.0 * std::numbers::pi * s2);
    return g * (std::exp(-(y - z) * (y - z) / (2 * s2)) - std::exp(-(y + z) * (y + z) / (2 * s2)));
}

double images_survival(double z, double w, double t) { return std::erf(z / std::sqrt(2.0 * (2.0 * t + w * w))); }

// -d_y of the images density at y = 0
double images_flux(double z, double w, double t) {
    const double s2 = 2.0 * t + w * w;
    return -2.0 * z / s2 * std::exp(-z * z / (2 * s2)) / std::sqrt(2.0 * std::numbers::pi * s2);
}

}  // namespace

TEST_CASE("zero drift reproduces the images solution") {
    for (auto scheme : {FpeScheme::implicit_upwind, FpeScheme::crank_nicolson_upwind}) {
        CAPTURE(to_string(scheme));
        const auto c = gaussian_config(5e-3, 5e-3, 1.0, 0.1, scheme);
        const auto f = solve_linear_fpe(c, FrozenDrift::zero(c.time_grid(), c.space_grid()));
        CHECK_NOTHROW(f.check_invariants());
        const std::size_t K = f.time.intervals;
        double l1 = 0.0;
        for (std::size_t j = 0; j < f.space.size(); ++j) {
            l1 += std::abs(f.row(K)[j] - images_density(1.0, 0.1, 1.0, f.space.at(j))) * f.space.step;
        }
        CHECK(l1 < 2e-3);
        for (std::size_t k : {std::size_t{20}, std::size_t{100}, K}) {
            CHECK(std::abs(f.beta[k] - images_survival(1.0, 0.1, f.time.at(k))) < 2e-3);
        }
    }
}

TEST_CASE("boundary flux") {
    SUBCASE("x exp(-x) has slope 1 at the origin") {
        DensityFlow f(UniformGrid{0.0, 1.0, 1}, UniformGrid{0.0, 1e-3, 5000});
        for (std::size_t j = 0; j < f.space.size(); ++j) f.row(1)[j] = f.space.at(j) * std::exp(-f.space.at(j));
        CHECK(boundary_flux(f, 1) == doctest::Approx(-1.0).epsilon(1e-5));
        for (auto& v : f.row(1)) v = -v;
        CHECK_THROWS_AS(boundary_flux(f, 1), std::runtime_error);
        CHECK_THROWS_AS(boundary_flux(f, 0), std::out_of_range);
        CHECK_THROWS_AS(boundary_flux(f, 2), std::out_of_range);
        DensityFlow tiny(UniformGrid{0.0, 1.0, 1}, UniformGrid{0.0, 1.0, 1});
        CHECK_THROWS_AS(boundary_flux(tiny, 1), std::invalid_argument);
    }
    SUBCASE("images flux and the survival decay rate") {
        const auto c = gaussian_config(2e-3, 2e-3, 1.0, 0.1, FpeScheme::crank_nicolson_upwind);
        const auto f = solve_linear_fpe(c, FrozenDrift::zero(c.time_grid(), c.space_grid()));
        for (std::size_t k : {std::size_t{100}, std::size_t{250}, std::size_t{499}}) {
            const double t = f.time.at(k);
            const double flux = boundary_flux(f, k);
            CHECK(flux == doctest::Approx(images_flux(1.0, 0.1, t)).epsilon(5e-3));
            const double dbeta = (f.beta[k + 1] - f.beta[k - 1]) / (2 * f.time.step);
            CHECK(dbeta == doctest::Approx(flux).epsilon(1e-2));
        }
    }
}

// After the first few implicit steps (which damp the peak less than the exact flow), the density obeys
// sup u <= (4 pi (t + w^2 / 2))^{-1/2}.
TEST_CASE("density stays below the heat-kernel bound") {
    const double w = 0.02;
    const auto c = gaussian_config(2e-3, 2e-3, 0.5, w, FpeScheme::implicit_upwind, 7.0);
    const auto f = solve_linear_fpe(c, FrozenDrift::zero(c.time_grid(), c.space_grid()));
    for (std::size_t k = 50; k < f.time.size(); k += 25) {
        const double sup = *std::max_element(f.row(k).begin(), f.row(k).end());
        CHECK(sup * std::sqrt(f.time.at(k) + w * w / 2) <= 0.29);
    }
}

TEST_CASE("nonlinear solver") {
    SUBCASE("zero kernel is the linear solve with zero drift, bit for bit") {
        const auto c = gaussian_config(1e-2, 1e-2, 1.0, 0.1, FpeScheme::crank_nicolson_upwind);
        const auto a = solve_nonlinear_fpe(c, KernelSpec::zero());
        const auto b = solve_linear_fpe(c, FrozenDrift::zero(c.time_grid(), c.space_grid()));
        CHECK(a.flow.u == b.u);
        CHECK(a.flow.beta == b.beta);
    }
    SUBCASE("constant kernel assembles c times the surviving mass") {
        const auto c = gaussian_config(1e-2, 1e-2, 1.0, 0.1, FpeScheme::implicit_upwind);
        const auto s = solve_nonlinear_fpe(c, KernelSpec::constant(0.7));
        for (std::size_t k = 0; k < s.flow.time.size(); ++k) {
            for (double v : s.drift.row(k)) CHECK(std::abs(v - 0.7 * s.flow.beta[k]) <= 1e-12);
        }
        CHECK_NOTHROW(s.flow.check_invariants());
    }
    SUBCASE("rational kernel agrees with a large particle system") {
        const auto kernel = KernelSpec::rational_attractive(1.0);
        auto c = gaussian_config(5e-3, 5e-3, 1.0, 0.02, FpeScheme::implicit_upwind);
        const auto s = solve_nonlinear_fpe(c, kernel);
        SimConfig sc;
        sc.n_particles = 3000;
        sc.n_steps = 200;
        sc.kernel = kernel;
        sc.initial_law = InitialLaw::point(1.0);
        sc.seed = 3;
        sc.record_steps = {100, 200};
        const auto p = simulate(sc);
        const auto surv = p.survival();
        for (std::size_t k : {std::size_t{100}, std::size_t{200}}) {
            const double b = s.flow.beta[k];
            const double se = std::sqrt(b * (1 - b) / 3000.0);
            CHECK(std::abs(surv[k] - b) <= 3 * se + 5e-3);
        }
        // attraction towards the bulk slows absorption relative to free particles
        CHECK(s.flow.beta.back() > images_survival(1.0, 0.02, 1.0));
    }
}

TEST_CASE("frozen drift interpolation") {
    const UniformGrid t{0.0, 0.5, 2}, x{0.0, 1.0, 2};
    std::vector<double> tab(9);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 3; ++j) tab[k * 3 + j] = static_cast<double>(k) + 10.0 * static_cast<double>(j);
    const FrozenDrift d(t, x, tab);
    CHECK(d.sup_bound == 22.0);
    CHECK(d(0.25, 0.5) == doctest::Approx(5.5));
    CHECK(d(1.0, 2.0) == 22.0);
    CHECK(d(5.0, 9.0) == 22.0);
    CHECK(d(-1.0, -1.0) == 0.0);
    CHECK_THROWS_AS(FrozenDrift(t, x, std::vector<double>(8)), std::invalid_argument);
}

TEST_CASE("configuration errors") {
    auto c = gaussian_config(1e-2, 1e-2, 1.0, 0.1, FpeScheme::implicit_upwind);
    const auto zero = FrozenDrift::zero(c.time_grid(), c.space_grid());
    CHECK_THROWS_AS(c.validate(2.0), std::invalid_argument);  // CFL 2 * k / h > 1
    CHECK_NOTHROW(c.validate(1.0));
    auto bad = c;
    bad.initial.pop_back();
    CHECK_THROWS_AS(solve_linear_fpe(bad, zero), std::invalid_argument);
    bad = c;
    bad.initial[10] = -1.0;
    CHECK_THROWS_AS(bad.validate(0.0), std::invalid_argument);
    bad = c;
    bad.initial_mass = 0.5;
    CHECK_THROWS_AS(bad.validate(0.0), std::invalid_argument);
    bad = c;
    bad.h = 0.0;
    CHECK_THROWS_AS(bad.validate(0.0), std::invalid_argument);
    bad = c;
    bad.k = 2e-2;
    CHECK_THROWS_AS(solve_linear_fpe(bad, zero), std::invalid_argument);
    CHECK_THROWS_AS(fpe_scheme_from_string("explicit"), std::invalid_argument);
    CHECK(fpe_scheme_from_string(to_string(FpeScheme::crank_nicolson_upwind)) == FpeScheme::crank_nicolson_upwind);
}

TEST_CASE("initial densities") {
    const UniformGrid g{0.0, 1e-2, 500};
    for (const auto& law : {InitialLaw::uniform(0.5, 2.0), InitialLaw::lognormal(0.0, 0.5),
                            InitialLaw{InitialLawKind::tabulated_quantile, {}, {0.2, 1.0, 3.0}}}) {
        const auto r = initial_density(law, g, 0.05);
        CHECK(r.front() == 0.0);
        CHECK(r.back() == 0.0);
        CHECK(trapezoid(r, g.step) == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto p = initial_density(InitialLaw::point(1.0), g, 0.05);
    CHECK(std::max_element(p.begin(), p.end()) - p.begin() == 100);
    CHECK(recommended_x_max(1.0, 1.0, 0.0) == 11.0);
    CHECK(recommended_x_max(1.0, 1.0, 1.0) == 12.0);
}

TEST_CASE("config from JSON") {
    auto c = fpe_config_from_json(nlohmann::json::parse(R"({"h": 0.01, "k": 0.01, "scheme": "crank-nicolson-upwind",
        "initial": {"kind": "gaussian", "center": 1.0, "width": 0.1}})"), 0.0);
    CHECK(c.scheme == FpeScheme::crank_nicolson_upwind);
    CHECK(c.x_max == std::ceil(1.8 + 6.5 * std::sqrt(2.0)));
    CHECK_NOTHROW(c.validate(0.0));
    c = fpe_config_from_json(nlohmann::json::parse(R"({"h": 0.01, "k": 0.01, "x_max": 6,
        "initial": {"kind": "point", "params": [1.0]}})"), 0.0);
    CHECK(c.x_max == 6.0);
    CHECK(std::max_element(c.initial.begin(), c.initial.end()) - c.initial.begin() == 100);
    c = fpe_config_from_json(nlohmann::json::parse(R"({"h": 0.01, "k": 0.01, "x_max": 4,
        "initial": {"kind": "tabulated", "x": [0, 1, 2], "density": [0, 1, 0]}})"), 0.0);
    CHECK(trapezoid(c.initial, c.space_grid().step) == doctest::Approx(1.0));
    CHECK(c.initial[100] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS(fpe_config_from_json(nlohmann::json::parse(R"({"h": 0.01, "k": 0.01,
        "initial": {"kind": "tabulated", "x": [0, 1], "density": [1]}})"), 0.0));
    CHECK_THROWS(fpe_config_from_json(nlohmann::json::parse(R"({"h": 0.01, "initial": {"kind": "gaussian"}})"), 0.0));
}
