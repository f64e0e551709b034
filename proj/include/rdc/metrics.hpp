#pragma once

#include <rdc/compress.hpp>
#include <rdc/importance.hpp>
#include <rdc/net.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rdc {

namespace detail {

template <typename Scalar>
void check_same_shape(const Network<Scalar>& a, const Network<Scalar>& b) {
  require_shape(a.depth() == b.depth() && a.head() == b.head(), "networks differ in depth or head");
  for (std::size_t l = 0; l < a.depth(); ++l) {
    require_shape(a.layers()[l].weights.rows() == b.layers()[l].weights.rows() &&
                      a.layers()[l].weights.cols() == b.layers()[l].weights.cols(),
                  "networks differ in layer " + std::to_string(l) + " shape");
  }
}

}  // namespace detail

/// sum_c p_c log(p_c / max(q_c, eps)); terms with p_c = 0 contribute 0.
template <typename Scalar>
Scalar kl_divergence(const Vec<Scalar>& p, const Vec<Scalar>& q) {
  require_shape(p.size() == q.size(), "distributions differ in length");
  Scalar acc = 0;
  for (Index c = 0; c < p.size(); ++c) {
    if (p[c] > Scalar(0)) acc += p[c] * std::log(p[c] / std::max(q[c], Scalar(kProbFloor)));
  }
  return acc;
}

/// Mean squared output distance, for any head.
template <typename Scalar>
Scalar output_sq_distance(const Network<Scalar>& net, const Network<Scalar>& net_hat, const Dataset<Scalar>& data) {
  detail::check_same_shape(net, net_hat);
  check_dataset(net, data, false);
  Scalar acc = 0;
  for (Index s = 0; s < data.size(); ++s) {
    const Vec<Scalar> x = data.inputs.row(s).transpose();
    acc += (forward(net, x) - forward(net_hat, x)).squaredNorm();
  }
  return acc / Scalar(data.size());
}

/// E_X ||f_w(X) - f_w'(X)||^2 for regression networks.
template <typename Scalar>
Scalar distortion_mse(const Network<Scalar>& net, const Network<Scalar>& net_hat, const Dataset<Scalar>& data) {
  if (net.head() != Head::regression || net_hat.head() != Head::regression)
    throw UsageError("distortion_mse needs regression networks");
  return output_sq_distance(net, net_hat, data);
}

/// E_X KL(f_w'(X) || f_w(X)), compressed model first.
template <typename Scalar>
Scalar distortion_kl(const Network<Scalar>& net, const Network<Scalar>& net_hat, const Dataset<Scalar>& data) {
  if (net.head() != Head::classification || net_hat.head() != Head::classification)
    throw UsageError("distortion_kl needs classification networks");
  detail::check_same_shape(net, net_hat);
  check_dataset(net, data, false);
  Scalar acc = 0;
  for (Index s = 0; s < data.size(); ++s) {
    const Vec<Scalar> x = data.inputs.row(s).transpose();
    acc += kl_divergence(forward(net_hat, x), forward(net, x));
  }
  return acc / Scalar(data.size());
}

template <typename Scalar>
Vec<Scalar> per_sample_losses(const Network<Scalar>& net, const Dataset<Scalar>& data) {
  check_dataset(net, data, true);
  Vec<Scalar> out(data.size());
  for (Index s = 0; s < data.size(); ++s)
    out[s] = loss(net, Vec<Scalar>(data.inputs.row(s).transpose()), sample_target(data, s));
  return out;
}

/// E[(L_w(X,Y) - L_w'(X,Y))^2].
template <typename Scalar>
Scalar distortion_supervised(const Network<Scalar>& net, const Network<Scalar>& net_hat, const Dataset<Scalar>& data) {
  detail::check_same_shape(net, net_hat);
  return (per_sample_losses(net, data) - per_sample_losses(net_hat, data)).squaredNorm() / Scalar(data.size());
}

/// E[L_w'(X,Y) - L_w(X,Y)].
template <typename Scalar>
Scalar loss_shift(const Network<Scalar>& net, const Network<Scalar>& net_hat, const Dataset<Scalar>& data) {
  detail::check_same_shape(net, net_hat);
  return (per_sample_losses(net_hat, data) - per_sample_losses(net, data)).mean();
}

template <typename Scalar>
Scalar accuracy(const Network<Scalar>& net, const Dataset<Scalar>& data) {
  if (net.head() != Head::classification) throw UsageError("accuracy needs a classification network");
  check_dataset(net, data, true);
  Index hits = 0;
  for (Index s = 0; s < data.size(); ++s)
    hits += argmax(forward(net, Vec<Scalar>(data.inputs.row(s).transpose()))) == data.classes[std::size_t(s)];
  return Scalar(hits) / Scalar(data.size());
}

/// Mean cross-entropy at the network's temperature.
template <typename Scalar>
Scalar cross_entropy(const Network<Scalar>& net, const Dataset<Scalar>& data) {
  if (net.head() != Head::classification) throw UsageError("cross_entropy needs a classification network");
  return per_sample_losses(net, data).mean();
}

// ---------------------------------------------------------------------------
// Compression of whole networks and the sweep harness

enum class CompressorKind { prune, quant, quant_quartic };

std::string to_string(CompressorKind k);
CompressorKind parse_compressor_kind(const std::string& s);

struct CompressOptions {
  CompressorKind compressor = CompressorKind::prune;
  double ratio = 1.0;  // pruning keep ratio
  Index k = 16;        // clusters per layer
  int iters = 100;
  int restarts = 10;
  std::uint64_t seed = 0;
  int bits_per_weight = 32;
  bool global_pool = false;  // one pool for all layers instead of per-layer
};

struct LayerBreakdown {
  std::size_t layer = 0;
  Index params = 0;
  Index kept = 0;      // pruning
  Index clusters = 0;  // quantization
  double objective = 0;
};

struct CompressedModel {
  Network<double> net;
  VectorXd weights;  // flat, in FlatIndex order
  double ratio = 1.0;
  std::vector<PruneMask> masks;         // one per segment (pruning)
  std::vector<Codebook<double>> codebooks;  // one per segment (quantization)
  std::vector<LayerBreakdown> per_layer;
};

/// Compresses every layer (or the global pool) of `net` under `imp`.
CompressedModel compress_network(const Network<double>& net, const FlatIndex& index, const ImportanceDiag<double>& imp,
                                 const CompressOptions& opt);

struct ReportRow {
  std::string method;
  CompressorKind compressor = CompressorKind::prune;
  double param = 0;  // keep ratio or k
  double ratio = 0;  // achieved compression ratio
  double mse = 0;    // mean squared output distance
  std::optional<double> kl;
  std::optional<double> supervised_sq;
  std::optional<double> accuracy;
  std::optional<double> cross_entropy;
  std::optional<double> loss_shift;
  std::vector<LayerBreakdown> per_layer;
};

struct CompressionReport {
  std::vector<ReportRow> rows;
};

struct SweepConfig {
  std::vector<ImportanceKind> objectives;
  CompressorKind compressor = CompressorKind::prune;
  std::vector<double> grid;  // keep ratios or cluster counts
  int iters = 100;
  int restarts = 10;
  std::uint64_t seed = 0;
  double hessian_ridge = 0;
  std::vector<double> ridge_grid;  // when set, Hessian objectives get one series per ridge
  bool include_biases = true;
  bool global_pool = false;
  int bits_per_weight = 32;
  int threads = 1;
};

/// Evaluates every (objective, grid point) pair. Importances come from
/// `importance_data`, metrics from `eval_data`. Rows are grouped by method and
/// sorted by achieved ratio within each group.
CompressionReport sweep(const Network<double>& net, const Dataset<double>& importance_data,
                        const Dataset<double>& eval_data, const SweepConfig& cfg);

/// Metrics of `net_hat` against `net` on `data` (whatever applies to the head and labels).
ReportRow evaluate_row(const Network<double>& net, const Network<double>& net_hat, const Dataset<double>& data);

}  // namespace rdc
