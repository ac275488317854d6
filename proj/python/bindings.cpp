#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "amf/fpe.hpp"
#include "amf/harness.hpp"
#include "amf/meanfield.hpp"
#include "amf/parametrix.hpp"
#include "amf/particle.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

py::array_t<double> vec(const std::vector<double>& v) {
    py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

py::array_t<double> grid_nodes(const amf::UniformGrid& g) {
    py::array_t<double> a(g.size());
    auto m = a.mutable_unchecked<1>();
    for (std::size_t i = 0; i < g.size(); ++i) m(i) = g.at(i);
    return a;
}

py::array_t<double> matrix(const std::vector<double>& data, std::size_t rows, std::size_t cols) {
    py::array_t<double> a({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
    std::copy(data.begin(), data.end(), a.mutable_data());
    return a;
}

py::dict flow_dict(const amf::DensityFlow& flow) {
    std::vector<double> flux;
    for (std::size_t k = 1; k < flow.time.size(); ++k) flux.push_back(amf::boundary_flux(flow, k));
    py::dict d;
    d["time"] = grid_nodes(flow.time);
    d["x"] = grid_nodes(flow.space);
    d["density"] = matrix(flow.u, flow.time.size(), flow.space.size());
    d["beta"] = vec(flow.beta);
    d["flux"] = vec(flux);
    return d;
}

amf::KernelSpec kernel(const std::string& text, const std::string& base_dir) {
    auto k = amf::kernel_from_json(json::parse(text), base_dir);
    amf::validate_kernel(k);
    return k;
}

py::dict simulate(const std::string& config, const std::string& base_dir, std::optional<std::uint64_t> seed,
                  unsigned threads, bool paths) {
    auto c = amf::sim_config_from_json(json::parse(config), base_dir);
    if (seed) c.seed = *seed;
    c.threads = threads;
    if (!paths) c.record_steps = {c.n_steps};
    amf::ParticlePaths p;
    {
        py::gil_scoped_release release;
        p = amf::simulate(c);
    }
    py::dict d;
    d["time"] = grid_nodes(c.time_grid());
    d["survival"] = vec(p.survival());
    d["terminal"] = vec(p.terminal());
    std::vector<double> absorbed;
    for (auto s : p.absorption_step) absorbed.push_back(s <= c.n_steps ? static_cast<double>(s) * c.dt() : INFINITY);
    d["absorption_time"] = vec(absorbed);
    if (paths) d["positions"] = matrix(p.positions, p.recorded_steps.size(), p.n());
    d["max_abs_drift"] = p.max_abs_drift;
    d["manifest"] = amf::make_manifest(amf::to_json(c), c.seed).dump();
    return d;
}

py::dict solve_fpe(const std::string& config, const std::string& kernel_text, const std::string& base_dir) {
    const auto k = kernel(kernel_text, base_dir);
    const auto cfg = amf::fpe_config_from_json(json::parse(config), k.sup_bound);
    amf::NonlinearSolution sol;
    {
        py::gil_scoped_release release;
        sol = amf::solve_nonlinear_fpe(cfg, k);
    }
    auto d = flow_dict(sol.flow);
    d["drift"] = matrix(sol.drift.table, sol.drift.time.size(), sol.drift.space.size());
    return d;
}

py::dict fixed_point(const std::string& config, const std::string& kernel_text, const std::string& base_dir,
                     double tol, std::size_t max_iter, double damping, unsigned max_splits) {
    const auto k = kernel(kernel_text, base_dir);
    const auto cfg = amf::fpe_config_from_json(json::parse(config), k.sup_bound);
    amf::PicardResult r;
    {
        py::gil_scoped_release release;
        r = amf::picard_solve(k, cfg, {tol, max_iter, damping, max_splits});
    }
    auto d = flow_dict(r.pair.flow);
    d["survival"] = vec(r.pair.survival.alpha);
    d["trace"] = vec(r.trace);
    d["segment_end"] = r.segment_end;
    d["iterations"] = r.iterations;
    return d;
}

py::dict chaos_sweep(const std::string& config, const std::string& base_dir, std::optional<std::uint64_t> seed,
                     unsigned threads) {
    auto cfg = amf::chaos_sweep_config_from_json(json::parse(config), base_dir);
    if (seed) cfg.sim.seed = *seed;
    cfg.threads = threads;
    amf::ExperimentReport rep;
    {
        py::gil_scoped_release release;
        rep = amf::run_chaos_sweep(cfg);
    }
    py::dict d;
    d["tables"] = rep.tables;
    d["manifest"] = rep.manifest.dump();
    return d;
}

py::list validate(const std::string& level, std::uint64_t seed, unsigned threads) {
    amf::ValidationOptions o;
    o.level = amf::validation_level_from_string(level);
    o.seed = seed;
    o.threads = threads;
    amf::ExperimentReport rep;
    {
        py::gil_scoped_release release;
        rep = amf::validate_all(o);
    }
    py::list out;
    for (const auto& c : rep.checks) {
        py::dict d;
        d["id"] = c.id;
        d["name"] = c.name;
        d["passed"] = c.passed;
        d["value"] = c.value;
        d["threshold"] = c.threshold;
        d["detail"] = c.detail;
        d["seconds"] = c.seconds;
        out.append(d);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Absorbed mean-field particle systems and their Fokker-Planck limit (compiled core).";
    py::register_exception<amf::PicardDivergence>(m, "PicardDivergence", PyExc_RuntimeError);
    py::register_exception<amf::QuadratureError>(m, "QuadratureError", PyExc_RuntimeError);

    m.def("version", &amf::code_version);
    m.def("simulate", &simulate, py::arg("config"), py::arg("base_dir") = ".", py::arg("seed") = py::none(),
          py::arg("threads") = 1u, py::arg("paths") = false);
    m.def("solve_fpe", &solve_fpe, py::arg("config"), py::arg("kernel"), py::arg("base_dir") = ".");
    m.def("fixed_point", &fixed_point, py::arg("config"), py::arg("kernel"), py::arg("base_dir") = ".",
          py::arg("tol") = 1e-8, py::arg("max_iter") = 100, py::arg("damping") = 1.0, py::arg("max_splits") = 4u);
    m.def("chaos_sweep", &chaos_sweep, py::arg("config"), py::arg("base_dir") = ".", py::arg("seed") = py::none(),
          py::arg("threads") = 1u);
    m.def("validate", &validate, py::arg("level") = "fast", py::arg("seed") = 20240917ULL, py::arg("threads") = 1u);

    m.def("eval_kernel", [](const std::string& k, double t, double x, double y) {
        return amf::eval_kernel(kernel(k, "."), t, x, y);
    });
    m.def("w1_distance", [](std::vector<double> a, std::vector<double> b) {
        return amf::w1_distance(amf::EmpiricalMeasure(std::move(a)), amf::EmpiricalMeasure(std::move(b)));
    });
    m.def("stopped_bm_density", [](double z, double t, py::array_t<double> y) {
        const auto o = amf::stopped_bm_oracle(z, t);
        return py::vectorize([&o](double v) { return o.density(v); })(y);
    });
    m.def("stopped_bm_survival", [](double z, double t) { return amf::stopped_bm_oracle(z, t).alpha; });
    m.def("drifted_killed_density", py::vectorize(&amf::drifted_killed_density), py::arg("z"), py::arg("c"),
          py::arg("t"), py::arg("y"));
    m.def("drifted_killed_survival", &amf::drifted_killed_survival, py::arg("z"), py::arg("c"), py::arg("t"));
}
