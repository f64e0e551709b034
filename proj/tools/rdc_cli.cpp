// rdc: importance scores, compression, rate-distortion curves, verification
// suites and sweeps for small dense networks.

#include <rdc/io.hpp>
#include <rdc/metrics.hpp>
#include <rdc/verify.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace {

using namespace rdc;

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kDomain = 3, kNumeric = 4, kVerifyFailed = 5 };

struct Options {
  std::string model, data, eval_data, out = "-";
  std::vector<std::string> labels;
  std::vector<std::string> objectives;
  std::string compressor = "prune";
  std::vector<double> ratio_grid, k_grid, ridge_grid, d_grid, sigma_w, lambda_x;
  double ratio = 1.0;
  long k = 0;
  int iters = 100;
  int restarts = 10;
  std::uint64_t seed = 0;
  std::optional<double> temperature;
  double hessian_ridge = 0;
  int p_max = 40;
  int threads = 1;
  int bits = 32;
  int points = 50;
  int instances = 0;
  long samples = 100000;
  std::optional<double> achievability;
  std::string preset, suite, report, sidecar, plot, verdicts;
  bool exclude_biases = false;
  bool global_pool = false;
};

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::fmt(v[i]);
  return s;
}

/// Writes to --out, or stdout for "-".
void emit(const std::string& path, const std::string& text) {
  if (path == "-" || path.empty())
    std::cout << text;
  else
    io::write_file(path, text);
}

io::HeaderComments base_header(const std::string& command, const Options& o) {
  io::HeaderComments h{{"command", command}, {"seed", std::to_string(o.seed)}};
  if (!o.model.empty()) h.push_back({"model", o.model});
  if (!o.data.empty()) h.push_back({"data", o.data});
  if (!o.eval_data.empty()) h.push_back({"eval_data", o.eval_data});
  if (!o.labels.empty()) h.push_back({"labels", join(o.labels)});
  if (o.temperature) h.push_back({"temperature", io::fmt(*o.temperature)});
  return h;
}

Network<double> load_network(const Options& o) {
  if (o.model.empty()) throw UsageError("--model is required");
  auto net = io::load_model(o.model);
  if (o.temperature) net = net.with_temperature(*o.temperature);
  return net;
}

Dataset<double> load_data(const std::string& path, const Options& o, const Network<double>& net) {
  if (path.empty()) throw UsageError("--data is required");
  return io::load_dataset(path, o.labels, net.head());
}

ImportanceKind single_objective(const Options& o) {
  if (o.objectives.size() != 1) throw UsageError("exactly one --objective is required");
  return parse_importance_kind(o.objectives.front());
}

void require_labels_for(ImportanceKind kind, const Options& o) {
  if (needs_labels(kind) && o.labels.empty())
    throw UsageError("objective '" + to_string(kind) + "' needs --labels");
}

// ---------------------------------------------------------------------------

int cmd_importance(const Options& o) {
  const auto kind = single_objective(o);
  require_labels_for(kind, o);
  const auto net = load_network(o);
  const auto data = load_data(o.data, o, net);
  const FlatIndex index(net, !o.exclude_biases);
  const auto imp = compute_importance(kind, net, data, index, o.hessian_ridge);
  auto h = base_header("importance", o);
  h.push_back({"objective", to_string(kind)});
  h.push_back({"hessian_ridge", io::fmt(o.hessian_ridge)});
  h.push_back({"include_biases", o.exclude_biases ? "false" : "true"});
  std::ostringstream os;
  io::write_importance_csv(os, imp, index, h);
  emit(o.out, os.str());
  return kOk;
}

int cmd_compress(const Options& o) {
  const auto kind = single_objective(o);
  require_labels_for(kind, o);
  const auto net = load_network(o);
  const auto data = load_data(o.data, o, net);
  const auto eval = o.eval_data.empty() ? data : load_data(o.eval_data, o, net);
  const FlatIndex index(net, !o.exclude_biases);
  const auto imp = compute_importance(kind, net, data, index, o.hessian_ridge);

  CompressOptions opt;
  opt.compressor = parse_compressor_kind(o.compressor);
  if (opt.compressor == CompressorKind::prune) {
    if (o.ratio < 0.0 || o.ratio > 1.0) throw UsageError("--ratio must lie in [0, 1]");
    opt.ratio = o.ratio;
  } else {
    if (o.k < 1) throw UsageError("quantization needs --k >= 1");
    opt.k = o.k;
  }
  opt.iters = o.iters;
  opt.restarts = o.restarts;
  opt.seed = o.seed;
  opt.bits_per_weight = o.bits;
  opt.global_pool = o.global_pool;
  const auto cm = compress_network(net, index, imp, opt);

  ReportRow row = evaluate_row(net, cm.net, eval);
  row.method = to_string(kind);
  row.compressor = opt.compressor;
  row.param = opt.compressor == CompressorKind::prune ? opt.ratio : double(opt.k);
  row.ratio = cm.ratio;
  row.per_layer = cm.per_layer;

  if (o.out.empty() || o.out == "-") throw UsageError("compress needs --out for the compressed model");
  io::save_model(cm.net, o.out);
  if (!o.sidecar.empty()) io::write_file(o.sidecar, io::compression_sidecar_json(cm, index));

  auto h = base_header("compress", o);
  h.push_back({"objective", to_string(kind)});
  h.push_back({"compressor", to_string(opt.compressor)});
  h.push_back({opt.compressor == CompressorKind::prune ? "ratio" : "k", io::fmt(row.param)});
  h.push_back({"iters", std::to_string(o.iters)});
  h.push_back({"restarts", std::to_string(o.restarts)});
  h.push_back({"hessian_ridge", io::fmt(o.hessian_ridge)});
  h.push_back({"output_model", o.out});
  std::ostringstream os;
  io::write_report_csv(os, CompressionReport{{row}}, h);
  emit(o.report.empty() ? "-" : o.report, os.str());
  return kOk;
}

int cmd_rd_curve(const Options& o) {
  std::optional<LinearSource<double>> src;
  if (!o.preset.empty()) {
    if (!o.sigma_w.empty() || !o.lambda_x.empty()) throw UsageError("--preset excludes --sigma-w/--lambda-x");
    src = preset_source(o.preset);
  } else {
    if (o.sigma_w.empty() || o.lambda_x.empty()) throw UsageError("give --preset or both --sigma-w and --lambda-x");
    src = LinearSource<double>(Eigen::Map<const VectorXd>(o.sigma_w.data(), Index(o.sigma_w.size())),
                               Eigen::Map<const VectorXd>(o.lambda_x.data(), Index(o.lambda_x.size())));
  }
  auto h = base_header("rd-curve", o);
  h.push_back({"sigma_w", join_doubles(std::vector<double>(src->sigma_w.data(), src->sigma_w.data() + src->size()))});
  h.push_back(
      {"lambda_x", join_doubles(std::vector<double>(src->lambda_x.data(), src->lambda_x.data() + src->size()))});
  h.push_back({"max_distortion", io::fmt(src->max_distortion())});
  std::ostringstream os;
  if (o.achievability) {
    h.push_back({"distortion", io::fmt(*o.achievability)});
    h.push_back({"samples", std::to_string(o.samples)});
    io::write_achievability_csv(os, achievability_report(*src, *o.achievability, o.samples, o.seed), h);
  } else {
    const auto grid = o.d_grid.empty() ? uniform_distortion_grid(*src, o.points) : o.d_grid;
    h.push_back({"d_grid", join_doubles(grid)});
    io::write_rd_curve_csv(os, rd_curve(*src, grid), h);
  }
  emit(o.out, os.str());
  return kOk;
}

int cmd_verify(const Options& o) {
  if (o.suite.empty()) throw UsageError("verify needs a suite");
  const auto suite = parse_verify_suite(o.suite);
  VerifyConfig cfg;
  cfg.seed = o.seed;
  cfg.p_max = o.p_max;
  cfg.preset = o.preset;
  cfg.instances = o.instances;
  const auto res = run_verify(suite, cfg);
  auto h = base_header("verify", o);
  h.push_back({"suite", to_string(suite)});
  h.push_back({"pmax", std::to_string(o.p_max)});
  if (!o.preset.empty()) h.push_back({"preset", o.preset});
  if (o.instances > 0) h.push_back({"instances", std::to_string(o.instances)});
  std::ostringstream os;
  write_checks_csv(os, res, h);
  emit(o.out, os.str());
  if (!o.verdicts.empty()) {
    std::ostringstream vs;
    io::write_verdict_csv(vs, res.verdicts, h);
    io::write_file(o.verdicts, vs.str());
  }
  return res.passed() ? kOk : kVerifyFailed;
}

int cmd_sweep(const Options& o) {
  SweepConfig cfg;
  if (o.objectives.empty()) throw UsageError("sweep needs --objective");
  for (const auto& s : o.objectives) {
    cfg.objectives.push_back(parse_importance_kind(s));
    require_labels_for(cfg.objectives.back(), o);
  }
  const auto net = load_network(o);
  const auto data = load_data(o.data, o, net);
  const auto eval = o.eval_data.empty() ? data : load_data(o.eval_data, o, net);
  cfg.compressor = parse_compressor_kind(o.compressor);
  if (cfg.compressor == CompressorKind::prune) {
    if (!o.k_grid.empty()) throw UsageError("--k-grid applies to quantization");
    cfg.grid = o.ratio_grid;
    for (double r : cfg.grid)
      if (r < 0.0 || r > 1.0) throw UsageError("--ratio-grid values must lie in [0, 1]");
  } else {
    if (!o.ratio_grid.empty()) throw UsageError("--ratio-grid applies to pruning; use --k-grid or --k");
    cfg.grid = o.k_grid;
    if (cfg.grid.empty() && o.k > 0) cfg.grid = {double(o.k)};
  }
  if (cfg.grid.empty()) throw UsageError("sweep needs a grid");
  cfg.iters = o.iters;
  cfg.restarts = o.restarts;
  cfg.seed = o.seed;
  cfg.hessian_ridge = o.hessian_ridge;
  cfg.ridge_grid = o.ridge_grid;
  cfg.include_biases = !o.exclude_biases;
  cfg.global_pool = o.global_pool;
  cfg.bits_per_weight = o.bits;
  cfg.threads = o.threads;
  const auto rep = sweep(net, data, eval, cfg);

  auto h = base_header("sweep", o);
  h.push_back({"objectives", join(o.objectives)});
  h.push_back({"compressor", to_string(cfg.compressor)});
  h.push_back({"grid", join_doubles(cfg.grid)});
  h.push_back({"iters", std::to_string(o.iters)});
  h.push_back({"restarts", std::to_string(o.restarts)});
  h.push_back({"hessian_ridge", io::fmt(o.hessian_ridge)});
  if (!o.ridge_grid.empty()) h.push_back({"hessian_ridge_grid", join_doubles(o.ridge_grid)});
  h.push_back({"include_biases", o.exclude_biases ? "false" : "true"});
  h.push_back({"global_pool", o.global_pool ? "true" : "false"});
  std::ostringstream os;
  io::write_report_csv(os, rep, h);
  emit(o.out, os.str());
  if (!o.plot.empty()) {
    std::ostringstream ps;
    io::write_plot_data(ps, rep, h);
    io::write_file(o.plot, ps.str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* app, Options& o) {
  app->add_option("--seed", o.seed, "Master seed for every random stream");
  app->add_option("--out", o.out, "Output path ('-' for stdout)");
  app->add_option("--threads", o.threads, "Worker cap; results do not depend on it")->check(CLI::PositiveNumber);
}

void add_model(CLI::App* app, Options& o) {
  app->add_option("--model", o.model, "Model JSON")->check(CLI::ExistingFile);
  app->add_option("--data", o.data, "Dataset CSV (importance and, by default, evaluation)")->check(CLI::ExistingFile);
  app->add_option("--labels", o.labels, "Label column name(s)")->delimiter(',');
  app->add_option("--temperature", o.temperature, "Override the model's softmax temperature");
  app->add_option("--hessian-ridge", o.hessian_ridge, "Ridge added to Hessian importances");
  app->add_flag("--exclude-biases", o.exclude_biases, "Leave biases out of the compressed parameters");
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Importance-weighted compression of small dense networks"};
  app.require_subcommand(1);

  auto* imp = app.add_subcommand("importance", "Per-parameter importance scores as CSV");
  add_common(imp, o);
  add_model(imp, o);
  imp->add_option("--objective", o.objectives, "baseline|unsup-reg|unsup-cls|grad|hess|grad-hess")->required();

  auto* comp = app.add_subcommand("compress", "Compress a model and report its metrics");
  add_common(comp, o);
  add_model(comp, o);
  comp->add_option("--objective", o.objectives, "Importance kind")->required();
  comp->add_option("--eval-data", o.eval_data, "Evaluation CSV")->check(CLI::ExistingFile);
  comp->add_option("--compressor", o.compressor, "prune|quant|quant-quartic");
  comp->add_option("--ratio", o.ratio, "Fraction of parameters kept");
  comp->add_option("--k", o.k, "Clusters per layer");
  comp->add_option("--iters", o.iters, "Lloyd iteration cap")->check(CLI::PositiveNumber);
  comp->add_option("--restarts", o.restarts, "k-means seedings per layer; the best is kept")->check(CLI::PositiveNumber);
  comp->add_option("--bits", o.bits, "Bits per uncompressed weight")->check(CLI::PositiveNumber);
  comp->add_option("--report", o.report, "Report CSV path (default stdout)");
  comp->add_option("--sidecar", o.sidecar, "JSON with masks or codebooks");
  comp->add_flag("--global-pool", o.global_pool, "Compress all layers as one pool");

  auto* rd = app.add_subcommand("rd-curve", "Rate-distortion curve of a linear Gaussian source");
  add_common(rd, o);
  rd->add_option("--preset", o.preset, "fig2");
  rd->add_option("--sigma-w", o.sigma_w, "Prior variances")->delimiter(',');
  rd->add_option("--lambda-x", o.lambda_x, "Input second moments")->delimiter(',');
  rd->add_option("--d-grid", o.d_grid, "Distortion grid, ascending")->delimiter(',');
  rd->add_option("--points", o.points, "Uniform grid size when --d-grid is absent")->check(CLI::PositiveNumber);
  rd->add_option("--achievability", o.achievability, "Monte Carlo check of the compressor at this distortion");
  rd->add_option("--samples", o.samples, "Monte Carlo samples");

  auto* ver = app.add_subcommand("verify", "Run a verification suite");
  add_common(ver, o);
  ver->add_option("suite,--suite", o.suite, "linear|relu-prune|relu-quant|hermite|cubic");
  ver->add_option("--preset", o.preset, "fig2 (linear) or relu8 (relu-prune)");
  ver->add_option("--pmax", o.p_max, "Hermite truncation order");
  ver->add_option("--instances", o.instances, "Instance count override");
  ver->add_option("--verdicts", o.verdicts, "Per-instance verdict CSV");

  auto* sw = app.add_subcommand("sweep", "Metrics over a compression grid");
  add_common(sw, o);
  add_model(sw, o);
  sw->add_option("--objective", o.objectives, "Importance kinds, comma separated")->delimiter(',')->required();
  sw->add_option("--eval-data", o.eval_data, "Evaluation CSV")->check(CLI::ExistingFile);
  sw->add_option("--compressor", o.compressor, "prune|quant|quant-quartic");
  sw->add_option("--ratio-grid", o.ratio_grid, "Keep ratios")->delimiter(',');
  sw->add_option("--k-grid", o.k_grid, "Cluster counts")->delimiter(',');
  sw->add_option("--k", o.k, "Single cluster count");
  sw->add_option("--iters", o.iters, "Lloyd iteration cap")->check(CLI::PositiveNumber);
  sw->add_option("--restarts", o.restarts, "k-means seedings per layer; the best is kept")->check(CLI::PositiveNumber);
  sw->add_option("--bits", o.bits, "Bits per uncompressed weight")->check(CLI::PositiveNumber);
  sw->add_option("--hessian-ridge-grid", o.ridge_grid, "One Hessian series per ridge")->delimiter(',');
  sw->add_option("--plot", o.plot, "Plot-data CSV path");
  sw->add_flag("--global-pool", o.global_pool, "Compress all layers as one pool");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*imp) return cmd_importance(o);
    if (*comp) return cmd_compress(o);
    if (*rd) return cmd_rd_curve(o);
    if (*ver) return cmd_verify(o);
    if (*sw) return cmd_sweep(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kDomain;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
