#include "countgraph/io.hpp"
#include "countgraph/marginal.hpp"
#include "countgraph/mcem.hpp"
#include "countgraph/select.hpp"
#include "countgraph/simulate.hpp"
#include "countgraph/spectral.hpp"
#include "countgraph/version.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace countgraph;

namespace {

CountPanel to_panel(const CountMatrix& counts, const std::optional<Matrix>& covariates, double period,
                    std::vector<std::string> labels) {
  const Matrix z = covariates ? *covariates : build_covariates(static_cast<int>(counts.cols()), period);
  CountPanel panel = make_panel(counts, z, std::move(labels));
  panel.validate();
  return panel;
}

py::dict graph_dict(const GraphResult& g) {
  py::list und, dir;
  for (const auto& e : g.undirected) und.append(py::make_tuple(e.i, e.j, e.rho));
  for (const auto& e : g.directed) dir.append(py::make_tuple(e.from, e.to, e.weights));
  py::dict d;
  d["undirected"] = und;
  d["directed"] = dir;
  d["in_weight"] = g.in_weight;
  d["out_weight"] = g.out_weight;
  return d;
}

py::dict trace_dict(const FitTrace& trace) {
  py::list it, qb, qa, pen, ll, rel, inc, se;
  for (const auto& r : trace.records) {
    it.append(r.iteration);
    qb.append(r.q_before);
    qa.append(r.q_after);
    pen.append(r.penalty);
    ll.append(r.loglik_mc);
    rel.append(r.rel_change);
    inc.append(r.increment ? py::cast(*r.increment) : py::none());
    se.append(r.increment_se);
  }
  py::dict d;
  d["iteration"] = it;
  d["q_before"] = qb;
  d["q_after"] = qa;
  d["penalty"] = pen;
  d["loglik_mc"] = ll;
  d["rel_change"] = rel;
  d["increment"] = inc;
  d["increment_se"] = se;
  return d;
}

FitConfig make_config(double gamma, int samples, int burn_in, int max_iter, double delta, std::uint64_t seed) {
  FitConfig cfg;
  cfg.gamma = gamma;
  cfg.chain.m = samples;
  cfg.chain.burn_in = burn_in;
  cfg.chain.seed = seed;
  cfg.max_iter = max_iter;
  cfg.tol = delta;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_countgraph, m) {
  m.doc() = "Sparse graphs for multivariate count series driven by a latent AR(p) process";
  m.attr("__version__") = kVersion;

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init<Matrix, std::vector<Matrix>, Vector>(), py::arg("beta"), py::arg("ar"), py::arg("sigma"))
      .def_property_readonly("n", &ModelParams::n)
      .def_property_readonly("p", &ModelParams::p)
      .def_property_readonly("q", &ModelParams::q)
      .def_property_readonly("beta", py::overload_cast<>(&ModelParams::beta, py::const_))
      .def_property_readonly("ar", py::overload_cast<>(&ModelParams::ar, py::const_))
      .def_property_readonly("sigma", py::overload_cast<>(&ModelParams::sigma, py::const_))
      .def("companion", &ModelParams::companion)
      .def("spectral_radius", &ModelParams::spectral_radius)
      .def("to_vector", &ModelParams::to_vector)
      .def_static("from_vector", &ModelParams::from_vector, py::arg("theta"), py::arg("n"), py::arg("p"),
                  py::arg("q"))
      .def("to_json", [](const ModelParams& p) { return io::params_to_json(p).dump(); })
      .def_static("from_json", [](const std::string& s) { return io::params_from_json(nlohmann::json::parse(s)); })
      .def("__repr__", [](const ModelParams& p) {
        return "<ModelParams n=" + std::to_string(p.n()) + " p=" + std::to_string(p.p()) +
               " q=" + std::to_string(p.q()) + ">";
      });

  m.def(
      "validate_params", [](const ModelParams& p) { return validate_params(p).violations; },
      "list of violations; empty when valid");

  m.def(
      "stationary_covariance", [](const ModelParams& p) { return stationary_covariance(p).block(); },
      "R_XX-stack(0) of the stacked state");

  m.def("compute_W", [](const ModelParams& p) { return compute_W(p).mats; });
  m.def("penalty_h1", [](const std::vector<Matrix>& w) { return penalty_h1(WStack{w}); });
  m.def("inverse_spectral_density", &inverse_spectral_density, py::arg("params"), py::arg("omega"));
  m.def(
      "partial_coherence",
      [](const ModelParams& p, int grid) { return partial_coherence(p, grid).rho; }, py::arg("params"),
      py::arg("grid_size") = kDefaultOmegaGrid);
  m.def(
      "extract_graph",
      [](const ModelParams& p, double rho_star, double tol, int grid) {
        return graph_dict(extract_graph(p, {rho_star, tol, grid}));
      },
      py::arg("params"), py::arg("rho_star") = kDefaultRhoStar, py::arg("tol") = kDefaultCausalityTol,
      py::arg("grid_size") = kDefaultOmegaGrid);

  m.def("build_covariates", &build_covariates, py::arg("length"), py::arg("period"));

  m.def(
      "joint_log_density",
      [](const CountMatrix& counts, const Matrix& covariates, const Matrix& x, const ModelParams& p) {
        const CountPanel panel = to_panel(counts, covariates, 0.0, {});
        return joint_log_density(panel, LatentSample{x}, p);
      },
      py::arg("counts"), py::arg("covariates"), py::arg("latent"), py::arg("params"));

  m.def(
      "laplace_log_marginal",
      [](const CountMatrix& counts, const Matrix& covariates, const ModelParams& p) {
        const CountPanel panel = to_panel(counts, covariates, 0.0, {});
        const MarginalEstimate est = laplace_log_marginal(panel, p);
        return py::make_tuple(est.log_marginal, est.mode);
      },
      py::arg("counts"), py::arg("covariates"), py::arg("params"),
      "Laplace log p(Y; params) without log(Y!), and the posterior mode of X.");

  m.def(
      "sample_latent",
      [](const CountMatrix& counts, const Matrix& covariates, const ModelParams& p, int samples, int burn_in,
         std::uint64_t seed) {
        ChainConfig cfg;
        cfg.m = samples;
        cfg.burn_in = burn_in;
        cfg.seed = seed;
        SamplerResult res = sample_latent(to_panel(counts, covariates, 0.0, {}), p, cfg);
        std::vector<Matrix> out;
        out.reserve(res.samples.size());
        for (auto& s : res.samples) out.push_back(std::move(s.values));
        return py::make_tuple(out, res.acceptance_rate);
      },
      py::arg("counts"), py::arg("covariates"), py::arg("params"), py::arg("samples") = 200,
      py::arg("burn_in") = 200, py::arg("seed") = 1);

  m.def(
      "simulate",
      [](int n, int p, int length, double sparsity, double magnitude, double noise_var, double period,
         std::uint64_t seed) {
        StudyDesign d;
        d.n = n;
        d.p = p;
        d.length = length;
        d.sparsity = sparsity;
        d.magnitude = magnitude;
        d.noise_variance = noise_var;
        d.period = period;
        const TruthSpec spec = make_study_truth(d, seed);
        const SimulationResult sim = generate(spec);
        py::dict out;
        out["counts"] = sim.panel.counts;
        out["covariates"] = spec.covariates;
        out["latent"] = sim.latent.values;
        out["params"] = spec.params;
        out["graph"] = graph_dict(sim.truth_graph);
        return out;
      },
      py::arg("n") = 10, py::arg("p") = 2, py::arg("length") = 200, py::arg("sparsity") = 0.15,
      py::arg("magnitude") = 0.3, py::arg("noise_var") = 0.01, py::arg("period") = 12.0, py::arg("seed") = 1);

  m.def(
      "fit",
      [](const CountMatrix& counts, std::optional<Matrix> covariates, int order, double gamma, int samples,
         int burn_in, int max_iter, double delta, std::uint64_t seed, double period) {
        const CountPanel panel = to_panel(counts, covariates, period, {});
        const FitConfig cfg = make_config(gamma, samples, burn_in, max_iter, delta, seed);
        FitResult fit;
        {
          py::gil_scoped_release release;
          fit = run_mcem(panel, initial_params(panel, order, cfg.sigma_init), cfg);
        }
        py::dict out;
        out["params"] = fit.params;
        out["converged"] = fit.converged;
        out["trace"] = trace_dict(fit.trace);
        return out;
      },
      py::arg("counts"), py::arg("covariates") = py::none(), py::arg("order") = 1, py::arg("gamma") = 0.0,
      py::arg("samples") = 200, py::arg("burn_in") = 200, py::arg("max_iter") = 100, py::arg("delta") = 1e-3,
      py::arg("seed") = 1, py::arg("period") = 52.0);

  m.def(
      "sweep",
      [](const CountMatrix& counts, std::optional<Matrix> covariates, int order, const std::vector<double>& gammas,
         int samples, int burn_in, int max_iter, double delta, std::uint64_t seed, double period) {
        const CountPanel panel = to_panel(counts, covariates, period, {});
        const FitConfig cfg = make_config(0.0, samples, burn_in, max_iter, delta, seed);
        std::vector<SweepPoint> points;
        {
          py::gil_scoped_release release;
          points = tradeoff_sweep(panel, order, cfg, gammas);
        }
        const SelectionReport rep = select_gamma(points);
        py::list rows;
        for (const auto& p : rep.points) {
          py::dict r;
          r["gamma"] = p.gamma;
          r["ok"] = p.ok;
          r["loglik_mc"] = p.loglik_mc;
          r["loglik_marginal"] = p.loglik_marginal;
          r["penalty"] = p.penalty;
          r["bic"] = p.bic;
          r["aicc"] = p.aicc_defined ? py::cast(p.aicc) : py::none();
          r["params"] = p.params;
          r["graph"] = graph_dict(p.graph);
          rows.append(r);
        }
        py::dict out;
        out["points"] = rows;
        out["chosen_gamma"] = *rep.chosen_gamma;
        out["chosen_index"] = rep.chosen_index;
        return out;
      },
      py::arg("counts"), py::arg("covariates") = py::none(), py::arg("order") = 1, py::arg("gammas"),
      py::arg("samples") = 200, py::arg("burn_in") = 200, py::arg("max_iter") = 100, py::arg("delta") = 1e-3,
      py::arg("seed") = 1, py::arg("period") = 52.0);

  m.def(
      "select_gamma",
      [](const std::vector<double>& gammas, const std::vector<double>& bics) {
        if (gammas.size() != bics.size()) throw InputError("gammas and bics differ in length");
        std::vector<SweepPoint> pts(gammas.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
          pts[i].gamma = gammas[i];
          pts[i].bic = bics[i];
        }
        return *select_gamma(std::move(pts)).chosen_gamma;
      },
      py::arg("gammas"), py::arg("bics"));

  m.def(
      "select_order",
      [](const CountMatrix& counts, std::optional<Matrix> covariates, const std::vector<int>& orders, int samples,
         int burn_in, int max_iter, double delta, std::uint64_t seed, double period) {
        const CountPanel panel = to_panel(counts, covariates, period, {});
        const FitConfig cfg = make_config(0.0, samples, burn_in, max_iter, delta, seed);
        SelectionReport rep;
        {
          py::gil_scoped_release release;
          rep = select_order(panel, orders, cfg);
        }
        py::list bic, aicc;
        for (const auto& p : rep.points) {
          bic.append(p.ok ? py::cast(p.bic) : py::none());
          aicc.append(p.ok && p.aicc_defined ? py::cast(p.aicc) : py::none());
        }
        py::dict out;
        out["chosen_order"] = *rep.chosen_order;
        out["bic"] = bic;
        out["aicc"] = aicc;
        out["rationale"] = rep.rationale;
        return out;
      },
      py::arg("counts"), py::arg("covariates") = py::none(), py::arg("orders") = std::vector<int>{0, 1, 2, 3},
      py::arg("samples") = 200, py::arg("burn_in") = 200, py::arg("max_iter") = 100, py::arg("delta") = 1e-3,
      py::arg("seed") = 1, py::arg("period") = 52.0);
}
