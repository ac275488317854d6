#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include "amf/kernels.hpp"

using namespace amf;

namespace {

std::vector<double> images_density(const UniformGrid& g, double z, double t) {
    std::vector<double> u(g.size());
    for (std::size_t j = 1; j < g.size(); ++j) {
        const double y = g.at(j);
        u[j] = (std::exp(-(y - z) * (y - z) / (4 * t)) - std::exp(-(y + z) * (y + z) / (4 * t))) / std::sqrt(4 * std::numbers::pi * t);
    }
    u.back() = 0.0;
    return u;
}

}  // namespace

TEST_CASE("kernel evaluation on the basic families") {
    CHECK(eval_kernel(KernelSpec::constant(0.5), 0.3, 1.0, -4.0) == 0.5);
    CHECK(eval_kernel(KernelSpec::zero(), 2.0, 1.0, 3.0) == 0.0);
    CHECK(eval_kernel(KernelSpec::rational_attractive(1.0), 0.0, 2.5, 2.5) == 1.0);
    CHECK(eval_kernel(KernelSpec::rational_attractive(1.0), 0.0, 0.0, 1.0) == doctest::Approx(0.5));
    CHECK(eval_kernel(KernelSpec::separable_product(2.0, 1.0, 3.0), 0.0, 0.5, 0.25) ==
          doctest::Approx(2.0 * std::tanh(0.5) * std::tanh(0.75)));
    CHECK_THROWS_AS(eval_kernel(KernelSpec::constant(1.0), -1e-9, 0, 0), std::invalid_argument);
}

TEST_CASE("kernel validation rejects malformed specs") {
    auto bad = KernelSpec::constant(1.0);
    bad.sup_bound = 0.9;
    CHECK_THROWS_AS(validate_kernel(bad), std::invalid_argument);
    auto z = KernelSpec::zero();
    z.sup_bound = 1.0;
    CHECK_THROWS_AS(validate_kernel(z), std::invalid_argument);
    auto p = KernelSpec::rational_attractive(1.0);
    p.params.push_back(3.0);
    CHECK_THROWS_AS(validate_kernel(p), std::invalid_argument);
    CHECK_THROWS_AS(eval_kernel(p, 0, 0, 0), std::invalid_argument);
    auto h = KernelSpec::constant(1.0);
    h.holder_exponent = 1.5;
    CHECK_THROWS_AS(validate_kernel(h), std::invalid_argument);
    CHECK_THROWS_AS(kernel_family_from_string("gaussian"), std::invalid_argument);
    CHECK_NOTHROW(validate_kernel(KernelSpec::separable_product(1.5, 2.0, 0.5)));
}

TEST_CASE("kernel boundedness on random probes") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-5.0, 20.0), ut(0.0, 5.0);
    for (const auto& k : {KernelSpec::constant(-0.7), KernelSpec::separable_product(1.3, 2.0, 1.0),
                          KernelSpec::rational_attractive(0.8, 0.5)}) {
        for (int n = 0; n < 100000; ++n) REQUIRE(std::abs(eval_kernel(k, ut(gen), u(gen), u(gen))) <= k.sup_bound);
    }
}

TEST_CASE("mean-field drift trivial values") {
    const UniformGrid g{0.0, 0.01, 1000};
    auto u = images_density(g, 1.0, 1.0);
    const double beta = trapezoid(u, g.step);
    CHECK(mean_field_drift(KernelSpec::constant(1.0), 0.0, 0.4, u, g, beta) == doctest::Approx(beta).epsilon(1e-12));
    CHECK(mean_field_drift(KernelSpec::zero(), 0.0, 0.4, u, g, beta) == 0.0);
    // scaled to mass 0.7
    for (auto& v : u) v *= 0.7 / beta;
    CHECK(mean_field_drift(KernelSpec::constant(1.0), 0.0, 2.0, u, g, 0.7) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK_THROWS_AS(mean_field_drift(KernelSpec::constant(1.0), 0.0, 2.0, u, g, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(mean_field_drift(KernelSpec::constant(1.0), 0.0, 2.0, u, g, 1.2), std::invalid_argument);
    u[10] = -1.0;
    CHECK_THROWS_AS(mean_field_drift(KernelSpec::constant(1.0), 0.0, 2.0, u, g, 0.7), std::invalid_argument);
}

TEST_CASE("mean-field drift of the rational kernel agrees with adaptive quadrature") {
    const UniformGrid g{0.0, 1e-4, 140000};
    const auto u = images_density(g, 1.0, 1.0);
    const double beta = trapezoid(u, g.step);
    const auto k = KernelSpec::rational_attractive(1.0);
    const double x = 0.8;
    auto f = [&](double y) {
        const double p = (std::exp(-(y - 1) * (y - 1) / 4) - std::exp(-(y + 1) * (y + 1) / 4)) / std::sqrt(4 * std::numbers::pi);
        return p / (1 + (x - y) * (x - y));
    };
    const double adaptive = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 14.0, 15, 1e-13);
    CHECK(std::abs(mean_field_drift(k, 0.0, x, u, g, beta) - adaptive) < 1e-8);
    const auto row = mean_field_drift_row(k, 0.0, u, g, beta);
    CHECK(std::abs(row[8000] - adaptive) < 1e-8);
}

TEST_CASE("drift cancellation: atom at 0 plus correction reduces to the density integral") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const UniformGrid g{0.0, 0.02, 400};
    for (const auto& k : {KernelSpec::separable_product(1.0, 2.0, 1.0), KernelSpec::rational_attractive(1.0, 0.7),
                          KernelSpec::constant(0.3)}) {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> u(g.size());
            for (std::size_t j = 1; j + 1 < u.size(); ++j) u[j] = U(gen);
            const double beta = U(gen);
            const double m = trapezoid(u, g.step);
            for (auto& v : u) v *= beta / m;
            const double x = 5 * U(gen), t = U(gen);
            const double full = interaction_drift(k, t, x, 1.0 - beta, u, g, beta);
            CHECK(std::abs(full - mean_field_drift(k, t, x, u, g, beta)) <= 1e-10);
        }
    }
}

TEST_CASE("empirical drift examples") {
    const std::vector<double> pos{1.0, -0.5, 2.0};
    CHECK(empirical_drift(KernelSpec::constant(1.0), 0.0, 0, pos) == doctest::Approx(2.0 / 3.0));
    const std::vector<double> dead{0.0, -1.0, 0.0};
    CHECK(empirical_drift(KernelSpec::rational_attractive(1.0), 0.0, 1, dead) == 0.0);
    const std::vector<double> alive{0.3, 1.0, 7.0, 2.0};
    CHECK(empirical_drift(KernelSpec::constant(0.25), 0.0, 2, alive) == 0.25);
    CHECK_THROWS_AS(empirical_drift(KernelSpec::constant(1.0), 0.0, 0, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("empirical drift matches a brute-force double loop exactly") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> U(-0.5, 6.0);
    std::vector<double> pos(2000);
    for (auto& p : pos) p = U(gen);
    const auto k = KernelSpec::rational_attractive(1.0);
    for (std::size_t i = 0; i < pos.size(); i += 97) {
        double s = 0.0;
        for (std::size_t j = 0; j < pos.size(); ++j) {
            if (pos[j] > 0.0) s += 1.0 / (1.0 + (pos[i] - pos[j]) * (pos[i] - pos[j]));
        }
        CHECK(empirical_drift(k, 0.0, i, pos) == s / 2000.0);
    }
}

TEST_CASE("weighted drift fast paths agree with the O(N^2) loop") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> U(0.0, 6.0);
    std::vector<double> src(2000), w(2000), tgt(300), out(300);
    for (auto& s : src) s = U(gen);
    for (auto& v : w) v = U(gen) > 1.0 ? 1.0 : 0.0;
    for (auto& t : tgt) t = U(gen);
    for (const auto& k : {KernelSpec::constant(0.4), KernelSpec::separable_product(1.0, 1.5, 0.5),
                          KernelSpec::rational_attractive(1.0, 2.0)}) {
        weighted_drift(k, 0.5, tgt, src, w, 2000.0, out);
        for (std::size_t i = 0; i < tgt.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < src.size(); ++j) s += eval_kernel(k, 0.5, tgt[i], src[j]) * w[j];
            CHECK(std::abs(out[i] - s / 2000.0) <= 1e-12);
        }
    }
}

TEST_CASE("smooth indicator") {
    CHECK(smooth_indicator(0.3, 0.0) == 0.0);
    CHECK(smooth_indicator(0.3, 0.3) == 1.0);
    CHECK(smooth_indicator(1.0, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(smooth_indicator(0.3, -2.0) == 0.0);
    CHECK(smooth_indicator(0.3, 5.0) == 1.0);
    CHECK_THROWS_AS(SmoothIndicator(0.0), std::invalid_argument);
    CHECK_THROWS_AS(SmoothIndicator(1.5), std::invalid_argument);
    const double eta = 0.2;
    double prev = -1.0;
    for (int i = -100; i <= 400; ++i) {
        const double x = i * 1e-3;
        const double v = smooth_indicator(eta, x);
        CHECK(v >= prev);
        CHECK((v >= 0.0 && v <= 1.0));
        if (x <= 0.0 || x >= eta) CHECK(v == (x > 0.0 ? 1.0 : 0.0));
        prev = v;
    }
    // second difference continuous across both junctions: near a junction it is O(x / eta^3),
    // while a C1-only blend would jump by 6 / eta^2 = 150
    const double h = 1e-5;
    auto d2 = [&](double x) {
        return (smooth_indicator(eta, x + h) - 2 * smooth_indicator(eta, x) + smooth_indicator(eta, x - h)) / (h * h);
    };
    for (double x0 : {0.0, eta}) CHECK(std::abs(d2(x0 + 3 * h) - d2(x0 - 3 * h)) < 1.0);
    // the gap to the indicator reaches 1 only inside (0, eta)
    CHECK(1.0 - smooth_indicator(eta, 1e-9) > 1.0 - 1e-12);
}

TEST_CASE("kernel JSON round trip and tabulated kernels") {
    const auto k = KernelSpec::separable_product(1.0, 2.0, 0.5);
    const auto back = kernel_from_json(to_json(k));
    CHECK(back.family == k.family);
    CHECK(back.params == k.params);
    CHECK(back.sup_bound == k.sup_bound);
    CHECK_THROWS(kernel_from_json(nlohmann::json{{"family", "constant"}, {"params", {1.0, 2.0}}, {"sup_bound", 1.0}, {"holder_exponent", 1.0}}));

    const std::string path = "test_kernel_table.csv";
    {
        std::ofstream out(path);
        out << "t,x,y,b\n";
        for (double t : {0.0, 1.0})
            for (double x : {0.0, 1.0, 2.0})
                for (double y : {0.0, 1.0}) out << t << ',' << x << ',' << y << ',' << 0.1 * (x - y) + 0.05 * t << '\n';
    }
    const auto tab = kernel_from_json(nlohmann::json{{"family", "tabulated"}, {"params", nlohmann::json::array()}, {"sup_bound", 0.3},
                                                     {"holder_exponent", 1.0}, {"table", path}});
    validate_kernel(tab);
    CHECK(eval_kernel(tab, 0.5, 1.5, 0.5) == doctest::Approx(0.1 + 0.025));
    CHECK(eval_kernel(tab, 9.0, 9.0, -3.0) == doctest::Approx(0.2 + 0.05));  // clamped at the edges
    auto tight = tab;
    tight.sup_bound = 0.1;
    CHECK_THROWS_AS(validate_kernel(tight), std::invalid_argument);
    {
        std::ofstream out(path);
        out << "t,x,b\n0,0,1\n";
    }
    CHECK_THROWS(KernelTable::read_csv(path));
    std::remove(path.c_str());
}
