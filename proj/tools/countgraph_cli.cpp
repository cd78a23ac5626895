// countgraph command-line tool: simulate | fit | sweep | order-select | graph-export.
//
// Exit codes: 0 success, 2 input/config error, 3 numerical failure.

#include "countgraph/io.hpp"
#include "countgraph/mcem.hpp"
#include "countgraph/select.hpp"
#include "countgraph/simulate.hpp"
#include "countgraph/version.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace countgraph;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  fs::path out;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct DataOptions {
  fs::path counts;
  fs::path covariates;
  double period = 52.0;
  bool normalized = false;
};

struct FitOptions {
  int order = 1;
  double gamma = 0.0;
  int samples = 200;
  int burn_in = 200;
  int thin = 1;
  int max_iter = 100;
  double delta = 1e-3;
  double sigma_init = 0.5;
  bool conditional = false;
};

struct GraphFlags {
  double rho_star = kDefaultRhoStar;
  double tol = kDefaultCausalityTol;
  int omega_grid = kDefaultOmegaGrid;

  GraphOptions options() const {
    if (!(rho_star >= 0.0 && rho_star < 1.0)) throw InputError("--rho-star must lie in [0, 1)");
    if (!(tol >= 0.0)) throw InputError("--tol must be >= 0");
    if (omega_grid < 64) throw InputError("--omega-grid must be >= 64");
    return {rho_star, tol, omega_grid};
  }
};

void add_common(CLI::App* cmd, CommonOptions& c) {
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "master RNG seed");
  cmd->add_option("--workers", c.workers, "parallel fits (order selection)")->check(CLI::PositiveNumber);
}

void add_data(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--counts", d.counts, "counts CSV (header of labels, one row per time)")->required();
  cmd->add_option("--covariates", d.covariates, "covariates CSV; default trend + seasonal design");
  cmd->add_option("--period", d.period, "seasonal period of the default design");
  cmd->add_flag("--normalized-counts", d.normalized, "also write counts scaled by each series' maximum");
}

void add_fit(CLI::App* cmd, FitOptions& f, bool with_gamma) {
  cmd->add_option("--order", f.order, "AR order p");
  if (with_gamma) cmd->add_option("--gamma", f.gamma, "penalty weight");
  cmd->add_option("--samples", f.samples, "retained MH samples per iteration (m)");
  cmd->add_option("--burn-in", f.burn_in, "burn-in sweeps");
  cmd->add_option("--thin", f.thin, "keep every k-th sweep");
  cmd->add_option("--max-iter", f.max_iter, "MCEM iteration cap");
  cmd->add_option("--delta", f.delta, "relative-change stopping threshold");
  cmd->add_option("--sigma-init", f.sigma_init, "initial noise standard deviation");
  cmd->add_flag("--conditional", f.conditional, "drop the initial-block density from Q");
}

void add_graph(CLI::App* cmd, GraphFlags& g) {
  cmd->add_option("--rho-star", g.rho_star, "partial coherence threshold");
  cmd->add_option("--tol", g.tol, "AR coefficient tolerance for directed edges");
  cmd->add_option("--omega-grid", g.omega_grid, "frequency grid size on [0, pi]");
}

FitConfig make_fit_config(const FitOptions& f, std::uint64_t seed) {
  FitConfig cfg;
  cfg.gamma = f.gamma;
  cfg.tol = f.delta;
  cfg.max_iter = f.max_iter;
  cfg.chain.m = f.samples;
  cfg.chain.burn_in = f.burn_in;
  cfg.chain.thin = f.thin;
  cfg.chain.seed = seed;
  cfg.include_initial_block = !f.conditional;
  cfg.sigma_init = f.sigma_init;
  if (!(f.sigma_init > 0.0)) throw InputError("--sigma-init must be > 0");
  if (f.order < 0) throw InputError("--order must be >= 0");
  cfg.validate();
  return cfg;
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw InputError("cannot create output directory '" + out.string() + "'");
}

void write_text(const fs::path& path, std::string_view text) {
  try {
    io::write_file_atomic(path, text);
  } catch (const std::system_error& e) {
    throw InputError(e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json manifest(const std::string& command, const json& config, std::uint64_t seed) {
  json m;
  m["tool"] = "countgraph";
  m["command"] = command;
  m["seed"] = seed;
  m["config"] = config;
  m["versions"] = {{"countgraph", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                 "." + std::to_string(EIGEN_MINOR_VERSION)},
                   {"boost", BOOST_LIB_VERSION},
                   {"rng", "boost::random::mt19937_64"}};
  return m;
}

json fit_json(const FitOptions& f) {
  return {{"order", f.order},         {"gamma", f.gamma},     {"samples", f.samples},
          {"burn_in", f.burn_in},     {"thin", f.thin},       {"max_iter", f.max_iter},
          {"delta", f.delta},         {"sigma_init", f.sigma_init},
          {"conditional", f.conditional}};
}

json data_json(const DataOptions& d) {
  return {{"counts", d.counts.string()},
          {"covariates", d.covariates.string()},
          {"period", d.period},
          {"normalized_counts", d.normalized}};
}

json graph_json(const GraphFlags& g) {
  return {{"rho_star", g.rho_star}, {"tol", g.tol}, {"omega_grid", g.omega_grid}};
}

io::CsvTable trace_table(const FitTrace& trace) {
  io::CsvTable t;
  t.header = {"iteration", "q_before", "q_after",   "penalty",       "loglik_mc",
              "rel_change", "increment", "increment_se", "mstep_flagged", "acceptance_mean"};
  for (const auto& r : trace.records) {
    t.rows.push_back({std::to_string(r.iteration), io::format_double(r.q_before), io::format_double(r.q_after),
                      io::format_double(r.penalty), io::format_double(r.loglik_mc),
                      io::format_double(r.rel_change), r.increment ? io::format_double(*r.increment) : "",
                      r.increment ? io::format_double(r.increment_se) : "", r.mstep_flagged ? "1" : "0",
                      io::format_double(r.acceptance.size() ? r.acceptance.mean() : 0.0)});
  }
  return t;
}

void write_graph_outputs(const fs::path& out, const ModelParams& params, const std::vector<std::string>& labels,
                         const GraphOptions& gopt) {
  const CoherenceField field = partial_coherence(params, gopt.grid_size);
  GraphResult graph;
  graph.undirected = partial_graph(field, gopt.rho_star);
  graph.directed = causality_graph(params, gopt.tol);
  std::tie(graph.in_weight, graph.out_weight) = edge_weights(params);
  write_json(out / "graph.json", io::graph_to_json(graph, labels));
  write_text(out / "undirected.dot", io::undirected_dot(graph, labels));
  write_text(out / "directed.dot", io::directed_dot(graph, labels));
  write_text(out / "rho.csv", io::format_csv(io::matrix_table(field.rho, labels)));
  write_text(out / "weights.csv", io::format_csv(io::weights_table(graph, labels)));
}

void write_fit_outputs(const fs::path& out, const ModelParams& params, const FitTrace& trace,
                       const std::vector<std::string>& labels, const GraphOptions& gopt) {
  write_json(out / "params.json", io::params_to_json(params, labels));
  write_text(out / "trace.csv", io::format_csv(trace_table(trace)));
  write_graph_outputs(out, params, labels, gopt);
}

CountPanel load_panel(const DataOptions& d, const fs::path& out) {
  if (!(d.period > 0.0)) throw InputError("--period must be > 0");
  CountPanel panel = io::read_panel(d.counts, d.covariates, d.period);
  if (d.normalized) write_text(out / "normalized_counts.csv", io::format_csv(io::normalized_counts_table(panel)));
  return panel;
}

std::vector<double> parse_gamma_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw InputError("--gamma-grid: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw InputError("--gamma-grid is empty");
  return out;
}

std::vector<int> parse_order_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw InputError("--orders: '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw InputError("--orders is empty");
  return out;
}

json point_json(const SweepPoint& p) {
  json j = {{"gamma", p.gamma},         {"ok", p.ok},           {"loglik_mc", p.loglik_mc},
            {"loglik_marginal", p.loglik_marginal},
            {"penalty", p.penalty},     {"bic", p.bic},         {"iterations", p.iterations},
            {"converged", p.converged}, {"undirected_edges", p.graph.undirected.size()},
            {"directed_edges", p.graph.directed.size()}};
  j["aicc"] = p.aicc_defined ? json(p.aicc) : json(nullptr);
  if (!p.ok) j["error"] = p.error;
  return j;
}

std::string cell(const SweepPoint& p, double v) { return p.ok ? io::format_double(v) : ""; }

// ---- subcommands ----------------------------------------------------------

struct SimulateOptions {
  int n = 10;
  int order = 2;
  int length = 200;
  double sparsity = 0.15;
  double magnitude = 0.3;
  double noise_var = 0.01;
  double period = 12.0;
};

int run_simulate(const CommonOptions& c, const SimulateOptions& s, const GraphFlags& g) {
  StudyDesign design;
  design.n = s.n;
  design.p = s.order;
  design.length = s.length;
  design.sparsity = s.sparsity;
  design.magnitude = s.magnitude;
  design.noise_variance = s.noise_var;
  design.period = s.period;
  if (s.n < 1 || s.order < 0 || s.length < 1) throw InputError("need --n >= 1, --order >= 0, --length >= 1");
  if (!(s.noise_var > 0.0) || !(s.period > 0.0)) throw InputError("--noise-var and --period must be > 0");

  prepare_out(c.out);
  const json config = {{"n", s.n},          {"order", s.order},         {"length", s.length},
                       {"sparsity", s.sparsity}, {"magnitude", s.magnitude}, {"noise_var", s.noise_var},
                       {"period", s.period}, {"graph", graph_json(g)}};
  write_json(c.out / "manifest.json", manifest("simulate", config, c.seed));

  TruthSpec spec = make_study_truth(design, c.seed);
  spec.graph = g.options();
  const SimulationResult sim = generate(spec);
  write_text(c.out / "counts.csv", io::format_csv(io::counts_table(sim.panel)));
  write_text(c.out / "covariates.csv", io::format_csv(io::covariates_table(spec.covariates)));
  write_json(c.out / "truth_params.json", io::params_to_json(spec.params, sim.panel.labels));
  write_json(c.out / "truth_graph.json", io::graph_to_json(sim.truth_graph, sim.panel.labels));
  std::cout << "simulated " << s.n << " series x " << s.length << " steps into " << c.out.string() << "\n";
  return 0;
}

int run_fit(const CommonOptions& c, const DataOptions& d, const FitOptions& f, const GraphFlags& g) {
  const GraphOptions gopt = g.options();
  const FitConfig cfg = make_fit_config(f, c.seed);
  prepare_out(c.out);
  write_json(c.out / "manifest.json",
             manifest("fit", {{"data", data_json(d)}, {"fit", fit_json(f)}, {"graph", graph_json(g)}}, c.seed));
  const CountPanel panel = load_panel(d, c.out);
  try {
    const FitResult fit = run_mcem(panel, initial_params(panel, f.order, cfg.sigma_init), cfg);
    write_fit_outputs(c.out, fit.params, fit.trace, panel.labels, gopt);
    std::cout << "fit " << (fit.converged ? "converged" : "reached max-iter") << " after "
              << fit.trace.records.size() << " iterations\n";
  } catch (const DivergenceError& e) {
    write_text(c.out / "trace.csv", io::format_csv(trace_table(e.trace())));
    throw;
  }
  return 0;
}

int run_order_select(const CommonOptions& c, const DataOptions& d, const FitOptions& f, const GraphFlags& g,
                     const std::string& orders_text) {
  const GraphOptions gopt = g.options();
  const std::vector<int> orders = parse_order_list(orders_text);
  const FitConfig cfg = make_fit_config(f, c.seed);
  prepare_out(c.out);
  json config = {{"data", data_json(d)}, {"fit", fit_json(f)}, {"graph", graph_json(g)}, {"orders", orders}};
  write_json(c.out / "manifest.json", manifest("order-select", config, c.seed));
  const CountPanel panel = load_panel(d, c.out);
  const SelectionReport rep = select_order(panel, orders, cfg, gopt, c.workers);

  io::CsvTable t;
  t.header = {"order", "loglik_mc", "loglik_marginal", "k", "aicc", "bic", "ok"};
  json pts = json::array();
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    const auto& p = rep.points[i];
    const int k = p.ok ? effective_parameter_count(p.params, gopt.tol) : 0;
    t.rows.push_back({std::to_string(orders[i]), cell(p, p.loglik_mc), cell(p, p.loglik_marginal),
                      p.ok ? std::to_string(k) : "",
                      p.ok && p.aicc_defined ? io::format_double(p.aicc) : "", cell(p, p.bic), p.ok ? "1" : "0"});
    json pj = point_json(p);
    pj["order"] = orders[i];
    pts.push_back(std::move(pj));
  }
  write_text(c.out / "orders.csv", io::format_csv(t));
  write_json(c.out / "selection.json",
             {{"chosen_order", *rep.chosen_order}, {"rationale", rep.rationale}, {"points", pts}});
  std::cout << rep.rationale << "\n";
  return 0;
}

int run_sweep(const CommonOptions& c, const DataOptions& d, FitOptions f, const GraphFlags& g,
              const std::string& grid_text, const std::string& orders_text) {
  const GraphOptions gopt = g.options();
  const bool auto_grid = grid_text == "auto";
  std::vector<double> gammas;
  if (!auto_grid) gammas = parse_gamma_list(grid_text);
  std::vector<int> orders;
  if (!orders_text.empty()) orders = parse_order_list(orders_text);
  FitConfig cfg = make_fit_config(f, c.seed);
  prepare_out(c.out);
  json config = {{"data", data_json(d)}, {"fit", fit_json(f)}, {"graph", graph_json(g)}, {"gamma_grid", grid_text}};
  if (!orders.empty()) config["orders"] = orders;
  write_json(c.out / "manifest.json", manifest("sweep", config, c.seed));
  const CountPanel panel = load_panel(d, c.out);

  json selection;
  if (!orders.empty()) {
    const SelectionReport ord = select_order(panel, orders, cfg, gopt, c.workers);
    f.order = *ord.chosen_order;
    selection["order_selection"] = {{"chosen_order", f.order}, {"rationale", ord.rationale}};
  }
  if (auto_grid) gammas = auto_gamma_grid(panel, f.order, cfg, gopt);

  SweepOptions sopt;
  sopt.graph = gopt;
  std::vector<SweepPoint> points = tradeoff_sweep(panel, f.order, cfg, gammas, sopt);

  io::CsvTable sweep, curve;
  sweep.header = {"gamma", "loglik_mc", "loglik_marginal", "penalty", "bic", "aicc", "undirected_edges", "directed_edges",
                  "iterations", "converged", "ok"};
  curve.header = {"gamma", "loglik_mc", "penalty"};
  json pts = json::array();
  for (const auto& p : points) {
    sweep.rows.push_back({io::format_double(p.gamma), cell(p, p.loglik_mc), cell(p, p.loglik_marginal),
                          cell(p, p.penalty), cell(p, p.bic),
                          p.ok && p.aicc_defined ? io::format_double(p.aicc) : "",
                          p.ok ? std::to_string(p.graph.undirected.size()) : "",
                          p.ok ? std::to_string(p.graph.directed.size()) : "",
                          p.ok ? std::to_string(p.iterations) : "", p.converged ? "1" : "0", p.ok ? "1" : "0"});
    if (p.ok) curve.rows.push_back({io::format_double(p.gamma), io::format_double(p.loglik_mc),
                                    io::format_double(p.penalty)});
    pts.push_back(point_json(p));
  }
  write_text(c.out / "sweep.csv", io::format_csv(sweep));
  write_text(c.out / "tradeoff.csv", io::format_csv(curve));

  const SelectionReport rep = select_gamma(points);
  selection["order"] = f.order;
  selection["chosen_gamma"] = *rep.chosen_gamma;
  selection["rationale"] = rep.rationale;
  selection["points"] = pts;
  write_json(c.out / "selection.json", selection);

  const SweepPoint& chosen = rep.points[rep.chosen_index];
  write_fit_outputs(c.out, chosen.params, chosen.trace, panel.labels, gopt);
  std::cout << rep.rationale << "\n";
  return 0;
}

int run_graph_export(const CommonOptions& c, const fs::path& params_path, const GraphFlags& g) {
  const GraphOptions gopt = g.options();
  std::vector<std::string> labels;
  ModelParams params;
  try {
    params = io::params_from_json(json::parse(io::read_file(params_path)), &labels);
  } catch (const json::parse_error& e) {
    throw InputError("'" + params_path.string() + "': " + e.what());
  }
  require_valid(params);
  if (static_cast<int>(labels.size()) != params.n()) throw InputError("params JSON: labels must have n entries");
  prepare_out(c.out);
  write_json(c.out / "manifest.json",
             manifest("graph-export", {{"params", params_path.string()}, {"graph", graph_json(g)}}, c.seed));
  write_graph_outputs(c.out, params, labels, gopt);
  std::cout << "exported graphs for " << params.n() << " series\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse graphs for count time series driven by a latent AR(p) process"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonOptions common;
  DataOptions data;
  FitOptions fit;
  GraphFlags graph;
  SimulateOptions sim;
  std::string gamma_grid, orders = "0,1,2,3", sweep_orders;
  fs::path params_path;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic panel from a sparse truth");
  add_common(simulate, common);
  add_graph(simulate, graph);
  simulate->add_option("--n", sim.n, "number of series");
  simulate->add_option("--order", sim.order, "AR order");
  simulate->add_option("--length", sim.length, "series length N");
  simulate->add_option("--sparsity", sim.sparsity, "probability of a non-zero AR entry");
  simulate->add_option("--magnitude", sim.magnitude, "absolute value of non-zero AR entries");
  simulate->add_option("--noise-var", sim.noise_var, "latent noise variance");
  simulate->add_option("--period", sim.period, "seasonal period");

  auto* fit_cmd = app.add_subcommand("fit", "fit one penalized model by MCEM");
  add_common(fit_cmd, common);
  add_data(fit_cmd, data);
  add_fit(fit_cmd, fit, true);
  add_graph(fit_cmd, graph);

  auto* sweep = app.add_subcommand("sweep", "fit along a gamma grid and select by BIC");
  add_common(sweep, common);
  add_data(sweep, data);
  add_fit(sweep, fit, false);
  add_graph(sweep, graph);
  sweep->add_option("--gamma-grid", gamma_grid, "comma-separated ascending gammas, or 'auto'")->required();
  sweep->add_option("--orders", sweep_orders, "select the order first from this list");

  auto* order = app.add_subcommand("order-select", "fit each AR order at gamma = 0 and rank by BIC/AICc");
  add_common(order, common);
  add_data(order, data);
  add_fit(order, fit, false);
  add_graph(order, graph);
  order->add_option("--orders", orders, "comma-separated AR orders");

  auto* exporter = app.add_subcommand("graph-export", "rebuild graph files from a params JSON");
  add_common(exporter, common);
  add_graph(exporter, graph);
  exporter->add_option("--params", params_path, "params JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*simulate) return run_simulate(common, sim, graph);
    if (*fit_cmd) return run_fit(common, data, fit, graph);
    if (*sweep) return run_sweep(common, data, fit, graph, gamma_grid, sweep_orders);
    if (*order) return run_order_select(common, data, fit, graph, orders);
    if (*exporter) return run_graph_export(common, params_path, graph);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
