#include "mftdn/cli.hpp"

#include "mftdn/estimation.hpp"
#include "mftdn/inference.hpp"
#include "mftdn/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mftdn {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One section of the JSON config; command-line flags take precedence over it.
struct Section {
  std::string name;
  Json json = Json::object();
  fs::path base;

  bool has(const char* key) const { return json.contains(key) && !json.at(key).is_null(); }

  template <typename T>
  T get(const std::optional<T>& flag, const char* key, T fallback) const {
    if (flag) return *flag;
    if (!has(key)) return fallback;
    try {
      return json.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw UsageError("config " + name + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  std::optional<T> get(const std::optional<T>& flag, const char* key) const {
    if (flag || !has(key)) return flag;
    return get<T>(flag, key, T{});
  }

  std::optional<fs::path> path(const std::optional<std::string>& flag, const char* key) const {
    if (flag) return fs::path(*flag);
    if (!has(key)) return std::nullopt;
    const fs::path p = get<std::string>(std::nullopt, key, "");
    return p.is_absolute() ? p : base / p;
  }
};

struct Global {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> config;
};

struct Context {
  Json config = Json::object();
  fs::path config_dir = ".";
  std::optional<std::uint64_t> seed;
  fs::path out_dir = ".";
  std::ostream* out = nullptr;

  Section section(const std::string& name) const {
    Section s{name, Json::object(), config_dir};
    if (config.contains(name)) {
      if (!config.at(name).is_object()) throw UsageError("config section '" + name + "' must be an object");
      s.json = config.at(name);
    }
    return s;
  }

  std::uint64_t require_seed(const std::string& why) const {
    if (!seed) throw UsageError(why + " needs --seed");
    return *seed;
  }

  fs::path output(const std::string& file) const {
    fs::create_directories(out_dir);
    return out_dir / file;
  }
};

Json parse_json_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw UsageError(what + " not found: " + path.string());
  try {
    return read_json(path);
  } catch (const DataError& e) {
    throw UsageError(std::string("parse error in ") + what + ": " + e.what());
  }
}

UniformRange range_from(const Section& s, const char* key, UniformRange fallback) {
  if (!s.has(key)) return fallback;
  const auto v = s.get<std::vector<double>>(std::nullopt, key, {});
  if (v.size() != 2) throw UsageError("config " + s.name + "." + key + " must be [lo, hi]");
  return {v[0], v[1]};
}

KernelSpec kernel_from_config(const Json& j, const std::string& where) {
  try {
    return kernel_from_json(j);
  } catch (const Json::exception& e) {
    throw UsageError(where + ": " + e.what());
  }
}

// --- data -------------------------------------------------------------------

struct DataFlags {
  std::optional<std::string> edges;
  std::optional<std::string> manifest;
  std::optional<std::string> mask;
  bool exclude_diagonal = false;

  void attach(CLI::App* app) {
    app->add_option("--edges", edges, "Edge list CSV (layer,time,src,dst)");
    app->add_option("--manifest", manifest, "Manifest JSON; defaults to manifest.json next to the edges");
    app->add_option("--mask", mask, "Observation mask CSV; defaults to mask.csv next to the edges if present");
    app->add_flag("--exclude-diagonal", exclude_diagonal, "Leave self-loops out of the loss");
  }

  ObservationSet load(const Context& ctx) const {
    const Section s = ctx.section("data");
    const auto edge_path = s.path(edges, "edges");
    if (!edge_path) throw UsageError("no edge list given (--edges or data.edges)");
    const fs::path manifest_path = s.path(manifest, "manifest").value_or(edge_path->parent_path() / "manifest.json");
    auto mask_path = s.path(mask, "mask");
    if (!mask_path && fs::exists(edge_path->parent_path() / "mask.csv")) mask_path = edge_path->parent_path() / "mask.csv";
    std::vector<std::string> warnings;
    ObservationSet data = load_edge_list(*edge_path, manifest_path, mask_path, &warnings);
    for (const auto& w : warnings) *ctx.out << "warning: " << w << '\n';
    data.exclude_diagonal = exclude_diagonal || s.get<bool>(std::nullopt, "exclude_diagonal", false);
    return data;
  }
};

// --- fit settings -------------------------------------------------------------

struct FitFlags {
  std::optional<Index> d;
  std::optional<std::string> kernel;
  std::optional<double> period;
  std::optional<std::string> init;
  std::optional<std::string> initial;
  std::optional<double> step_size;
  std::optional<Index> max_iters;
  std::optional<double> rel_tol;
  std::optional<double> constraint;
  std::optional<double> theta_ridge;
  std::optional<Index> theta_max_iters;

  void attach(CLI::App* app, bool with_model = true) {
    if (with_model) {
      app->add_option("--d", d, "Latent dimension");
      app->add_option("--kernel", kernel, "radial | bernoulli | polynomial | periodic");
      app->add_option("--period", period, "Period of the periodic kernel, in normalized time");
    }
    app->add_option("--init", init, "spectral | random | provided");
    app->add_option("--initial", initial, "Parameters JSON used with --init provided");
    app->add_option("--step-size", step_size, "Initial gradient step");
    app->add_option("--max-iters", max_iters, "Iteration cap");
    app->add_option("--rel-tol", rel_tol, "Relative loss change treated as converged");
    app->add_option("--constraint", constraint, "Bound C on sigma; default twice the initial sigma");
    app->add_option("--theta-ridge", theta_ridge, "Ridge weight of the coefficient solve");
    app->add_option("--theta-max-iters", theta_max_iters, "Iteration cap of the coefficient solve");
  }

  KernelSpec resolve_kernel(const Section& s) const {
    KernelSpec k = KernelSpec::radial();
    if (kernel) {
      k.family = parse_kernel_family(*kernel);
    } else if (s.has("kernel")) {
      k = kernel_from_config(s.json.at("kernel"), "config " + s.name + ".kernel");
    }
    if (period) k.period = *period;
    k.validate();
    return k;
  }

  FitConfig resolve(const Context& ctx, const Section& s) const {
    FitConfig c;
    c.d = s.get<Index>(d, "d", c.d);
    c.step_size = s.get<double>(step_size, "step_size", c.step_size);
    c.max_iters = s.get<Index>(max_iters, "max_iters", c.max_iters);
    c.rel_tol = s.get<double>(rel_tol, "rel_tol", c.rel_tol);
    c.max_halvings = s.get<int>(std::nullopt, "max_halvings", c.max_halvings);
    c.constraint = s.get<double>(constraint, "constraint");
    c.theta_solve.ridge = s.get<double>(theta_ridge, "theta_ridge", c.theta_solve.ridge);
    c.theta_solve.max_iters = s.get<Index>(theta_max_iters, "theta_max_iters", c.theta_solve.max_iters);
    c.theta_solve.rel_tol = s.get<double>(std::nullopt, "theta_rel_tol", c.theta_solve.rel_tol);
    c.init = parse_init_method(s.get<std::string>(init, "init", to_string(c.init)));
    if (c.init == InitMethod::random) c.seed = ctx.require_seed("random initialization");
    if (c.init == InitMethod::provided) {
      const auto p = s.path(initial, "initial");
      if (!p) throw UsageError("--init provided needs --initial");
      c.initial = params_from_json(read_json(*p));
    }
    c.validate();
    return c;
  }
};

// --- estimates ----------------------------------------------------------------

// A fit report, bare parameters, or a ground truth read as an estimate.
struct Estimate {
  Matrix X;
  Matrix Y;
  Index layers = 0;
  CoreFunction R;
  std::optional<ModelParams> params;
};

Estimate read_estimate(const fs::path& path) {
  const Json j = read_json(path);
  Estimate e;
  if (j.contains("core")) {
    auto truth = std::make_shared<GroundTruth>(truth_from_json(j));
    e.X = truth->X;
    e.Y = truth->Y;
    e.layers = truth->layers();
    e.R = [truth](Index s, double t) { return truth->R(s, t); };
    return e;
  }
  ModelParams p = j.contains("params") ? report_from_json(j).params : params_from_json(j);
  e.X = p.X;
  e.Y = p.Y;
  e.layers = p.layers();
  e.params = p;
  e.R = [params = std::make_shared<ModelParams>(std::move(p))](Index s, double t) {
    return eval_R(*params, s, t);
  };
  return e;
}

ModelParams read_params(const fs::path& path) {
  Estimate e = read_estimate(path);
  if (!e.params) throw DataError(path.string() + " holds a ground truth, not fitted parameters");
  return *e.params;
}

fs::path require_path(const Section& s, const std::optional<std::string>& flag, const char* key,
                      const std::string& what) {
  const auto p = s.path(flag, key);
  if (!p) throw UsageError("no " + what + " given (--" + std::string(key) + " or " + s.name + "." + key + ")");
  return *p;
}

std::vector<std::string> column_names(const std::string& prefix, Index count, Index first = 1) {
  std::vector<std::string> names;
  for (Index i = first; i < first + count; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

// Rows as given when they already fit in `dim` columns, otherwise their CMDS
// coordinates (principal components of the centred rows).
Matrix reduce_rows(const Matrix& rows, Index dim) {
  if (rows.cols() <= dim) return rows;
  Matrix dist(rows.rows(), rows.rows());
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.rows(); ++j) dist(i, j) = (rows.row(i) - rows.row(j)).norm();
  }
  return classical_mds(dist, dim);
}

Matrix euclidean_distances(const Matrix& rows) {
  Matrix dist(rows.rows(), rows.rows());
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.rows(); ++j) dist(i, j) = (rows.row(i) - rows.row(j)).norm();
  }
  return dist;
}

Linkage parse_linkage(const std::string& name) {
  if (name == "average") return Linkage::average;
  if (name == "single") return Linkage::single;
  if (name == "complete") return Linkage::complete;
  throw UsageError("unknown linkage '" + name + "'");
}

// --- subcommands ----------------------------------------------------------------

struct SimulateFlags {
  std::optional<std::string> generator;
  std::optional<Index> n, d, m, layers, clusters;
  std::optional<double> period;

  void attach(CLI::App* app) {
    app->add_option("--generator", generator, "sbm | layer-clusters");
    app->add_option("--n", n, "Vertices");
    app->add_option("--d", d, "Latent dimension");
    app->add_option("--m", m, "Time points");
    app->add_option("--layers,-K", layers, "Layers");
    app->add_option("--clusters", clusters, "Layer clusters (layer-clusters generator)");
    app->add_option("--period", period, "Period M of the sinusoidal cores, in normalized time");
  }

  int run(const Context& ctx) const {
    const Section s = ctx.section("simulate");
    const std::string gen = s.get<std::string>(generator, "generator", "sbm");
    const std::uint64_t seed = ctx.require_seed("simulate");
    SimulatedNetwork sim;
    Json echo;
    if (gen == "sbm") {
      SbmSpec spec;
      spec.n = s.get<Index>(n, "n", spec.n);
      spec.d = s.get<Index>(d, "d", spec.d);
      spec.m = s.get<Index>(m, "m", spec.m);
      spec.layers = s.get<Index>(layers, "K", spec.layers);
      spec.period = s.get<double>(period, "period", spec.period);
      spec.mu = range_from(s, "mu", spec.mu);
      spec.delta = range_from(s, "delta", spec.delta);
      spec.phi = range_from(s, "phi", spec.phi);
      spec.seed = seed;
      spec.validate();
      sim = generate_dynamic_multilayer_sbm(spec);
      echo = {{"generator", gen}, {"n", spec.n}, {"d", spec.d}, {"m", spec.m}, {"K", spec.layers},
              {"period", spec.period}, {"seed", seed}};
    } else if (gen == "layer-clusters") {
      LayerClusterSpec spec;
      spec.n = s.get<Index>(n, "n", spec.n);
      spec.d = s.get<Index>(d, "d", spec.d);
      spec.m = s.get<Index>(m, "m", spec.m);
      spec.layers = s.get<Index>(layers, "K", spec.layers);
      spec.clusters = s.get<Index>(clusters, "clusters", spec.clusters);
      spec.period = s.get<double>(period, "period", spec.period);
      spec.mu = range_from(s, "mu", spec.mu);
      spec.delta = range_from(s, "delta", spec.delta);
      spec.phi = range_from(s, "phi", spec.phi);
      spec.seed = seed;
      spec.validate();
      sim = generate_layer_clusters(spec);
      echo = {{"generator", gen}, {"n", spec.n}, {"d", spec.d}, {"m", spec.m}, {"K", spec.layers},
              {"clusters", spec.clusters}, {"period", spec.period}, {"seed", seed}};
    } else {
      throw UsageError("unknown generator '" + gen + "'");
    }
    const fs::path manifest = ctx.output("manifest.json");
    write_edge_list(sim.data, ctx.output("edges.csv"), manifest);
    Json j = read_json(manifest);
    j["simulation"] = echo;
    write_json(manifest, j);
    write_json(ctx.output("truth.json"), to_json(sim.truth));
    *ctx.out << "simulated " << gen << ": n=" << sim.data.n << " K=" << sim.data.layers
             << " m=" << sim.data.num_times() << " d=" << sim.truth.dim() << '\n';
    return exit_ok;
  }
};

struct FitCommand {
  DataFlags data;
  FitFlags flags;

  void attach(CLI::App* app) {
    data.attach(app);
    flags.attach(app);
  }

  int run(const Context& ctx) const {
    const Section s = ctx.section("fit");
    const ObservationSet obs = data.load(ctx);
    const KernelSpec kernel = flags.resolve_kernel(s);
    const FitConfig config = flags.resolve(ctx, s);
    const FitReport report = fit(obs, config, kernel);
    write_json(ctx.output("fit.json"), to_json(report));
    write_loss_trace(ctx.output("loss_trace.csv"), report);
    *ctx.out << "fit: loss " << report.final_loss << ", bic " << report.bic << ", "
             << report.iterations_run << " iterations, "
             << (report.converged ? "converged" : "stopped at the iteration cap") << '\n';
    return report.converged ? exit_ok : exit_not_converged;
  }
};

struct SelectCommand {
  DataFlags data;
  FitFlags flags;
  std::optional<std::string> grid;

  void attach(CLI::App* app) {
    data.attach(app);
    flags.attach(app, false);
    app->add_option("--grid", grid, R"(Candidate grid JSON: {"d": [...], "kernels": [{"family": ...}, ...]})");
  }

  int run(const Context& ctx) const {
    const Section s = ctx.section("select");
    Json g = s.json;
    if (grid) {
      g = parse_json_file(grid.value(), "grid " + *grid);
    } else if (s.has("grid")) {
      g = parse_json_file(*s.path(std::nullopt, "grid"), "grid");
    }
    std::vector<Index> ds;
    std::vector<KernelSpec> kernels;
    try {
      ds = g.at("d").get<std::vector<Index>>();
      for (const auto& k : g.at("kernels")) kernels.push_back(kernel_from_config(k, "grid kernel"));
    } catch (const Json::exception& e) {
      throw UsageError(std::string("candidate grid needs \"d\" and \"kernels\" lists: ") + e.what());
    }
    if (ds.empty() || kernels.empty()) throw UsageError("candidate grid is empty");
    const ObservationSet obs = data.load(ctx);
    const FitConfig base = flags.resolve(ctx, s);
    const SelectionResult result = select_model(obs, ds, kernels, base);
    write_bic_table(ctx.output("bic_table.csv"), result.table);
    write_json(ctx.output("fit.json"), to_json(result.best_fit));
    write_json(ctx.output("selection.json"),
               Json{{"d", result.best_d}, {"kernel", to_json(result.best_kernel)}, {"bic", result.best_fit.bic}});
    *ctx.out << "selected d=" << result.best_d << " kernel=" << result.best_kernel.label()
             << " bic=" << result.best_fit.bic << '\n';
    return exit_ok;
  }
};

struct EvalCommand {
  std::optional<std::string> fit_path, truth_path;
  std::optional<Index> grid_size, communities, layer_clusters;

  void attach(CLI::App* app) {
    app->add_option("--fit", fit_path, "Fit report, parameters, or ground truth JSON to evaluate");
    app->add_option("--truth", truth_path, "Ground truth JSON");
    app->add_option("--grid-size", grid_size, "Time points used for Acc(R)");
    app->add_option("--communities", communities, "Vertex communities for k-means on the factors");
    app->add_option("--layer-clusters", layer_clusters, "Layer clusters for k-means on the coefficients");
  }

  int run(const Context& ctx) const {
    const Section s = ctx.section("eval");
    const Estimate est = read_estimate(require_path(s, fit_path, "fit", "estimate"));
    const GroundTruth truth = truth_from_json(read_json(require_path(s, truth_path, "truth", "ground truth")));
    const Index g = s.get<Index>(grid_size, "grid_size", 100);
    if (g < 2) throw UsageError("--grid-size must be at least 2");
    const EstimationMetrics m = evaluate_estimate(est.X, est.Y, est.R, est.layers, truth, g);
    Json j{{"err_x", m.err_x}, {"err_y", m.err_y}, {"err", m.err}, {"acc_r", m.acc_r}, {"grid_size", g}};
    if (const auto k = s.get<Index>(communities, "communities")) {
      if (truth.labels_out.empty()) throw DataError("ground truth has no vertex labels");
      const std::uint64_t seed = ctx.require_seed("community detection");
      const double out = clustering_accuracy(kmeans(est.X, *k, seed).labels, truth.labels_out);
      const double in = clustering_accuracy(kmeans(est.Y, *k, seed).labels, truth.labels_in);
      j["community_accuracy_out"] = out;
      j["community_accuracy_in"] = in;
      j["community_accuracy"] = 0.5 * (out + in);
    }
    if (const auto k = s.get<Index>(layer_clusters, "layer_clusters")) {
      if (!est.params) throw DataError("layer clustering needs fitted coefficients");
      const std::uint64_t seed = ctx.require_seed("layer clustering");
      j["layer_cluster_accuracy"] =
          clustering_accuracy(kmeans(layer_features(*est.params), *k, seed).labels, truth.layer_group);
    }
    write_json(ctx.output("metrics.json"), j);
    *ctx.out << "Err " << m.err << "  Acc(R) " << m.acc_r << '\n';
    return exit_ok;
  }
};

struct EmbedCommand {
  std::optional<std::string> fit_path, task;
  std::optional<Index> dim, grid_size;

  void attach(CLI::App* app) {
    app->add_option("--fit", fit_path, "Fit report or parameters JSON");
    app->add_option("--task", task, "vertex | trajectory | layer");
    app->add_option("--dim", dim, "Embedding dimension");
    app->add_option("--grid-size", grid_size, "Time points per trajectory");
  }

  int run(const Context& ctx) const {
    const Section s = ctx.section("embed");
    const ModelParams p = read_params(require_path(s, fit_path, "fit", "fit"));
    const std::string t = s.get<std::string>(task, "task", "vertex");
    const Index k = s.get<Index>(dim, "dim", 2);
    const Index g = s.get<Index>(grid_size, "grid_size", 100);
    if (k < 1) throw UsageError("--dim must be positive");
    if (g < 1) throw UsageError("--grid-size must be positive");
    if (t == "vertex") {
      const Matrix out = reduce_rows(p.X, k);
      const Matrix in = reduce_rows(p.Y, k);
      std::vector<std::string> ids;
      for (Index i = 0; i < p.n(); ++i) ids.push_back(std::to_string(i));
      auto header = column_names("c", out.cols());
      header.insert(header.begin(), "vertex");
      write_matrix_csv(ctx.output("vertex_out.csv"), out, header, ids);
      write_matrix_csv(ctx.output("vertex_in.csv"), in, header, ids);
    } else if (t == "trajectory") {
      const auto grid = uniform_grid(g);
      const Matrix coords = classical_mds(trajectory_distance_matrix(p, grid, DistanceMode::per_point), k);
      std::vector<std::string> ids;
      for (Index l = 0; l < p.layers(); ++l) {
        for (double time : grid) ids.push_back(std::to_string(l) + "," + Json(time).dump());
      }
      auto header = column_names("c", coords.cols());
      header.insert(header.begin(), {"layer", "time"});
      write_matrix_csv(ctx.output("trajectory_coordinates.csv"), coords, header, ids);
    } else if (t == "layer") {
      const Matrix coords =
          classical_mds(trajectory_distance_matrix(p, uniform_grid(g), DistanceMode::per_trajectory), k);
      std::vector<std::string> ids;
      for (Index l = 0; l < p.layers(); ++l) ids.push_back(std::to_string(l));
      auto header = column_names("c", coords.cols());
      header.insert(header.begin(), "layer");
      write_matrix_csv(ctx.output("layer_coordinates.csv"), coords, header, ids);
    } else {
      throw UsageError("unknown embed task '" + t + "'");
    }
    *ctx.out << "embedded " << t << '\n';
    return exit_ok;
  }
};

struct ClusterCommand {
  std::optional<std::string> fit_path, task, features, linkage;
  std::optional<Index> k, grid_size;

  void attach(CLI::App* app) {
    app->add_option("--fit", fit_path, "Fit report or parameters JSON");
    app->add_option("--task", task, "layers | vertices");
    app->add_option("--features", features, "Layer features: theta | trajectory");
    app->add_option("--linkage", linkage, "average | single | complete");
    app->add_option("--k", k, "Number of clusters");
    app->add_option("--grid-size", grid_size, "Time points for trajectory features");
  }

  int run(const Context& ctx) const {
    const Section s = ctx.section("cluster");
    const ModelParams p = read_params(require_path(s, fit_path, "fit", "fit"));
    const std::string t = s.get<std::string>(task, "task", "layers");
    const auto clusters = s.get<Index>(k, "k");
    if (t == "layers") {
      const std::string f = s.get<std::string>(features, "features", "theta");
      Matrix dist;
      if (f == "theta") {
        dist = euclidean_distances(layer_features(p));
      } else if (f == "trajectory") {
        dist = trajectory_distance_matrix(p, uniform_grid(s.get<Index>(grid_size, "grid_size", 100)),
                                          DistanceMode::per_trajectory);
      } else {
        throw UsageError("unknown layer features '" + f + "'");
      }
      if (p.layers() < 2) throw DataError("layer clustering needs at least two layers");
      const Dendrogram tree = hierarchical_cluster(dist, parse_linkage(s.get<std::string>(linkage, "linkage", "average")));
      write_dendrogram(ctx.output("dendrogram.csv"), tree);
      write_matrix_csv(ctx.output("layer_distances.csv"), dist);
      if (clusters) write_labels_csv(ctx.output("labels.csv"), "layer", tree.cut(*clusters));
      *ctx.out << "clustered " << p.layers() << " layers (" << tree.merges.size() << " merges)\n";
    } else if (t == "vertices") {
      if (!clusters) throw UsageError("vertex clustering needs --k");
      const std::uint64_t seed = ctx.require_seed("vertex clustering");
      write_labels_csv(ctx.output("labels_out.csv"), "vertex", kmeans(p.X, *clusters, seed).labels);
      write_labels_csv(ctx.output("labels_in.csv"), "vertex", kmeans(p.Y, *clusters, seed).labels);
      *ctx.out << "clustered " << p.n() << " vertices into " << *clusters << " communities\n";
    } else {
      throw UsageError("unknown cluster task '" + t + "'");
    }
    return exit_ok;
  }
};

struct OfflineCommand {
  DataFlags data;
  std::optional<std::string> fit_path;
  std::optional<double> theta_ridge;
  std::optional<Index> grid_size;

  void attach(CLI::App* app) {
    data.attach(app);
    app->add_option("--fit", fit_path, "Trained fit report or parameters JSON");
    app->add_option("--theta-ridge", theta_ridge, "Ridge weight of the coefficient solve");
    app->add_option("--grid-size", grid_size, "Time points for trajectory distances");
  }

  int run(const Context& ctx) const {
    const Section s = ctx.section("offline");
    const ModelParams trained = read_params(require_path(s, fit_path, "fit", "trained fit"));
    const ObservationSet obs = data.load(ctx);
    ThetaSolveOptions options;
    options.ridge = s.get<double>(theta_ridge, "theta_ridge", options.ridge);
    const OfflineFit result = offline_fit_R(obs, trained, options);
    ModelParams fresh = trained;
    fresh.theta = result.theta;
    Json j = to_json(fresh);
    j["loss"] = result.loss;
    write_json(ctx.output("offline_fit.json"), j);

    // Distance from every new layer's trajectory to every trained one.
    const auto grid = uniform_grid(s.get<Index>(grid_size, "grid_size", 100));
    const CoreFunction a = [&](Index l, double t) { return eval_R(fresh, l, t); };
    const CoreFunction b = [&](Index l, double t) { return eval_R(trained, l, t); };
    Matrix dist(fresh.layers(), trained.layers());
    for (Index i = 0; i < fresh.layers(); ++i) {
      for (Index j2 = 0; j2 < trained.layers(); ++j2) dist(i, j2) = trajectory_distance(a, i, b, j2, grid);
    }
    std::vector<std::string> ids;
    for (Index i = 0; i < fresh.layers(); ++i) ids.push_back(std::to_string(i));
    auto header = column_names("trained_", trained.layers(), 0);
    header.insert(header.begin(), "layer");
    write_matrix_csv(ctx.output("offline_distances.csv"), dist, header, ids);
    *ctx.out << "offline fit: loss " << result.loss << '\n';
    return exit_ok;
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilayer functional tensor dynamic network toolkit"};
  app.require_subcommand(1);
  Global global;
  app.add_option("--seed", global.seed, "Seed for every stochastic step");
  app.add_option("--out-dir", global.out_dir, "Output directory (default: current directory)");
  app.add_option("--config", global.config, "JSON config; flags override its values");

  SimulateFlags simulate;
  FitCommand fit_cmd;
  SelectCommand select;
  EvalCommand eval;
  EmbedCommand embed;
  ClusterCommand cluster;
  OfflineCommand offline;
  std::vector<std::pair<CLI::App*, std::function<int(const Context&)>>> commands;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.attach(sub);
    commands.emplace_back(sub, [&cmd](const Context& ctx) { return cmd.run(ctx); });
  };
  add("simulate", "Simulate a dynamic multilayer network with its ground truth", simulate);
  add("fit", "Fit the model to an edge list", fit_cmd);
  add("select", "Choose d and the kernel by BIC", select);
  add("eval", "Compare an estimate with a ground truth", eval);
  add("embed", "Low-dimensional coordinates of vertices, layers or trajectories", embed);
  add("cluster", "Cluster layers or vertices of a fitted model", cluster);
  add("offline-fit", "Fit trajectories of a new network against frozen factors", offline);
  // Global flags are accepted after the subcommand name too.
  for (auto& [sub, _] : commands) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    Context ctx;
    ctx.out = &out;
    if (global.config) {
      const fs::path path = *global.config;
      ctx.config = parse_json_file(path, "config " + path.string());
      if (!ctx.config.is_object()) throw UsageError("config must be a JSON object");
      ctx.config_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    }
    const Section top{"config", ctx.config, ctx.config_dir};
    ctx.seed = top.get<std::uint64_t>(global.seed, "seed");
    ctx.out_dir = top.path(global.out_dir, "out_dir").value_or(".");
    for (auto& [sub, run] : commands) {
      if (sub->parsed()) return run(ctx);
    }
    return exit_usage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return exit_data;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  }
}

}  // namespace mftdn
