#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "amf/csv.hpp"
#include "amf/harness.hpp"
#include "amf/rng.hpp"

using namespace amf;

namespace {

SimConfig sim(std::size_t n, std::size_t steps, KernelSpec k, std::uint64_t seed) {
    SimConfig c;
    c.n_particles = n;
    c.n_steps = steps;
    c.kernel = std::move(k);
    c.initial_law = InitialLaw::uniform(0.3, 1.5);
    c.seed = seed;
    return c;
}

// column `col` of a CSV table, header skipped
std::vector<double> column(const std::string& table, std::size_t col) {
    std::istringstream in(table);
    std::string line;
    std::getline(in, line);
    std::vector<double> out;
    while (std::getline(in, line)) out.push_back(csv::parse(csv::split(line)[col]));
    return out;
}

}  // namespace

TEST_CASE("test functions") {
    const auto bump = TestFunction::bump(1.0, 0.75);
    const auto poly = TestFunction::poly_cutoff(4, 0.2, 1.8);
    for (const auto* f : {&bump, &poly}) {
        const double h = 1e-5;
        for (double x = 0.1; x < 2.0; x += 0.0371) {
            CHECK(f->d1(x) == doctest::Approx((f->value(x + h) - f->value(x - h)) / (2 * h)).epsilon(1e-6));
            CHECK(f->d2(x) == doctest::Approx((f->d1(x + h) - f->d1(x - h)) / (2 * h)).epsilon(1e-5));
        }
        CHECK(f->sup == doctest::Approx(1.0));
    }
    CHECK(bump.value(1.75) == 0.0);
    CHECK(bump.d2(0.24) == 0.0);
    // poly cutoff of degree 4 on [a, b]: phi' peaks where 4 q^3 |q'| is largest
    CHECK(poly.sup_d1 > 0.0);
    CHECK_THROWS_AS(TestFunction::poly_cutoff(2, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(TestFunction::bump(1.0, 0.0), std::invalid_argument);
    const TestFunctionSpec spec{poly, {PathFunctionalKind::bounded_eval, 0.2, 2.0}};
    const auto back = test_function_from_json(to_json(spec));
    CHECK(back.phi.degree == 4);
    CHECK(back.Phi.cap == 2.0);
    CHECK_THROWS(test_function_from_json(nlohmann::json{{"phi", {{"kind", "gauss"}}}}));
}

TEST_CASE("theta estimators") {
    const auto kernel = KernelSpec::rational_attractive(1.0, 0.5);
    const auto paths = simulate(sim(50, 100, kernel, 5));
    const TestFunctionSpec spec{TestFunction::bump(1.0, 0.75), {PathFunctionalKind::bounded_eval, 0.2, 1.0}};

    SUBCASE("collapsed estimator equals the literal pair average") {
        const std::size_t N = paths.n(), ks = 20, kt = 100;
        const double dt = paths.config.dt();
        double total = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < N; ++j) {
                double integral = 0.0;
                for (std::size_t k = ks; k <= kt; ++k) {
                    const auto x = paths.at_step(k);
                    if (!paths.active(i, k)) continue;
                    const double t = static_cast<double>(k) * dt;
                    const double bj = paths.active(j, k) ? eval_kernel(kernel, t, x[i], x[j]) : 0.0;
                    const double w = (k == ks || k == kt) ? 0.5 * dt : dt;
                    integral += w * (spec.phi.d2(x[i]) + spec.phi.d1(x[i]) * bj);
                }
                const double phi_i = std::min(paths.at_step(20)[i], 1.0);
                total += phi_i * (spec.phi.value(paths.at_step(kt)[i]) - spec.phi.value(paths.at_step(ks)[i]) - integral);
            }
        }
        const double literal = total / static_cast<double>(N * N);
        CHECK(std::abs(theta_functional(paths, spec, 0.2, 1.0) - literal) <= 1e-10);
        CHECK(std::abs(theta_martingale_form(paths, spec, 0.2, 1.0) - literal) <= 1e-10);
    }
    SUBCASE("vanishes when phi never sees a particle") {
        const TestFunctionSpec far{TestFunction::bump(100.0, 0.5), {}};
        CHECK(theta_functional(paths, far, 0.0, 1.0) == 0.0);
    }
    SUBCASE("regularisation bound") {
        for (double eta : {0.3, 0.1, 0.02}) {
            const double gap = std::abs(theta_regularized(paths, spec, 0.2, 1.0, eta) - theta_functional(paths, spec, 0.2, 1.0));
            CHECK(gap <= regularization_constant(spec, kernel) * occupation_integral(paths, 0.2, 1.0, eta) + 1e-14);
        }
        CHECK(occupation_integral(paths, 0.2, 1.0, 0.1) <= occupation_integral(paths, 0.2, 1.0, 0.3));
        // an eta below every positive position changes nothing
        double smallest = 1e300;
        for (double x : paths.positions)
            if (x > 0.0) smallest = std::min(smallest, x);
        CHECK(occupation_integral(paths, 0.2, 1.0, 0.5 * smallest) == 0.0);
        CHECK(theta_regularized(paths, spec, 0.2, 1.0, 0.5 * smallest) == doctest::Approx(theta_functional(paths, spec, 0.2, 1.0)).epsilon(1e-13));
    }
    CHECK_THROWS_AS(theta_functional(paths, spec, 1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(theta_functional(paths, spec, 0.1, 1.0), std::invalid_argument);  // Phi looks past s
    auto sparse = sim(50, 100, kernel, 5);
    sparse.record_steps = {0, 100};
    CHECK_THROWS_AS(theta_functional(simulate(sparse), spec, 0.2, 1.0), std::invalid_argument);
}

TEST_CASE("theta has mean zero and shrinks with N") {
    const auto kernel = KernelSpec::rational_attractive(1.0);
    const TestFunctionSpec spec{TestFunction::bump(1.0, 0.75), {}};
    std::vector<double> mean_sq;
    for (std::size_t N : {50u, 200u}) {
        std::vector<double> th;
        for (std::size_t r = 0; r < 200; ++r) th.push_back(theta_functional(simulate(sim(N, 100, kernel, mix_seed(N, r))), spec, 0.0, 1.0));
        const double m = std::accumulate(th.begin(), th.end(), 0.0) / 200.0;
        double ss = 0.0, sq = 0.0;
        for (double v : th) {
            ss += (v - m) * (v - m);
            sq += v * v;
        }
        const double se = std::sqrt(ss / 199.0 / 200.0);
        // the Euler scheme leaves an O(dt) bias, well inside 4 standard errors here
        MESSAGE("N=" << N << ": mean Theta " << m << " (stderr " << se << ")");
        CHECK(std::abs(m) <= 4 * se);
        mean_sq.push_back(sq / 200.0);
    }
    // E[Theta^2] is of order 1/N
    CHECK(mean_sq[1] < 0.5 * mean_sq[0]);
}

TEST_CASE("bootstrap upper bound") {
    CHECK(bootstrap_upper_mean({2.0, 2.0, 2.0}, 0.95, 100, 1) == 2.0);
    std::vector<double> v;
    for (int i = 0; i < 400; ++i) v.push_back(std::sin(i * 1.7) + 1.0);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 400.0;
    const double u95 = bootstrap_upper_mean(v, 0.95, 4000, 3), u50 = bootstrap_upper_mean(v, 0.5, 4000, 3);
    CHECK(u95 > mean);
    CHECK(std::abs(u50 - mean) < 0.02);
    CHECK(u95 == bootstrap_upper_mean(v, 0.95, 4000, 3));
    CHECK_THROWS_AS(bootstrap_upper_mean({}, 0.95, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(bootstrap_upper_mean(v, 1.0, 10, 1), std::invalid_argument);
}

TEST_CASE("chaos sweep against the stopped Brownian motion") {
    ChaosSweepConfig cfg;
    cfg.n_list = {100, 400, 1600};
    cfg.replicas = 10;
    cfg.times = {0.5, 1.0};
    cfg.sim = sim(1, 50, KernelSpec::zero(), 17);
    cfg.sim.initial_law = InitialLaw::point(1.0);
    cfg.fpe.h = 2e-3;
    cfg.fpe.x_max = 12.0;
    cfg.limit = LimitMethod::oracle;
    const auto rep = run_chaos_sweep(cfg);
    const auto means = column(rep.tables.at("summary"), 2);
    REQUIRE(means.size() == 6);
    // rows run over n for t = 0.5, then over n for t = 1
    for (std::size_t i : {1u, 2u, 4u, 5u}) CHECK(means[i] < means[i - 1]);
    const auto slopes = column(rep.tables.at("slopes"), 1);
    for (double s : slopes) {
        CHECK(s >= -0.7);
        CHECK(s <= -0.3);
    }
    CHECK(rep.manifest.at("failed_replicas") == 0);
    CHECK(rep.manifest.contains("config_hash"));
    cfg.threads = 3;
    CHECK(run_chaos_sweep(cfg).tables == rep.tables);

    cfg.step_budget = 1e5;
    CHECK_THROWS_AS(run_chaos_sweep(cfg), std::invalid_argument);
    cfg.step_budget = 2e7;
    cfg.n_list = {400, 100};
    CHECK_THROWS_AS(run_chaos_sweep(cfg), std::invalid_argument);
    cfg.n_list = {100, 400};
    cfg.sim.kernel = KernelSpec::constant(0.5);
    CHECK_THROWS_AS(run_chaos_sweep(cfg), std::invalid_argument);

    CHECK(replica_seed(1, 100, 0) != replica_seed(1, 100, 1));
    CHECK(replica_seed(1, 100, 0) != replica_seed(1, 400, 0));
    CHECK(replica_seed(1, 100, 3) == mix_seed(mix_seed(1, 100), 3));
}

TEST_CASE("log-log slope") {
    CHECK(loglog_slope({1, 10, 100}, {1, 0.1, 0.01}) == doctest::Approx(-1.0));
    CHECK(loglog_slope({2, 8}, {3, 6}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(loglog_slope({1}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(loglog_slope({1, 2}, {1, -1}), std::invalid_argument);
}

TEST_CASE("manifests and reports") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    const auto m = make_manifest({{"x", 1}}, 42);
    CHECK(m.at("seed") == 42);
    CHECK(m.at("config_hash") == fnv1a_hex(nlohmann::json{{"x", 1}}.dump()));
    CHECK(m.at("code_version") == code_version());

    ExperimentReport rep;
    rep.manifest = m;
    rep.tables["t"] = "a,b\n1,2\n";
    CheckResult c;
    c.id = "1";
    c.name = "quoted \"name\"";
    c.passed = true;
    rep.checks.push_back(c);
    CHECK(rep.passed());
    const std::string dir = "report_test_dir";
    write_report(rep, dir);
    std::ifstream t(dir + "/t.csv"), checks(dir + "/checks.csv");
    std::string line;
    std::getline(t, line);
    CHECK(line == "a,b");
    std::getline(checks, line);
    CHECK(line == "id,name,passed,value,threshold,seconds,detail");
    std::getline(checks, line);
    CHECK(line.find("\"quoted \"\"name\"\"\"") != std::string::npos);
    CHECK(std::filesystem::exists(dir + "/manifest.json"));
    rep.checks.push_back({});
    CHECK_FALSE(rep.passed());
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(validation_level_from_string("slow"), std::invalid_argument);
}

TEST_CASE("deliberate defects are caught") {
    ValidationOptions good;
    CHECK(check_images_density(good).passed);
    CHECK(check_drifted_images(good).passed);
    ValidationOptions slow_diffusion = good;
    slow_diffusion.tamper_diffusivity = 0.5;
    CHECK_FALSE(check_images_density(slow_diffusion).passed);
    CHECK_FALSE(check_drifted_images(slow_diffusion).passed);
    ValidationOptions flipped = good;
    flipped.tamper_drift_sign = -1.0;
    CHECK_FALSE(check_drifted_images(flipped).passed);
}
