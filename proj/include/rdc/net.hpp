#pragma once

#include <rdc/types.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rdc {

enum class Activation { relu, identity };
enum class Head { regression, classification };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }
inline std::string to_string(Head h) { return h == Head::regression ? "regression" : "classification"; }

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> weights;  // out x in
  Vec<Scalar> bias;     // out
  Activation activation = Activation::identity;

  Index in_dim() const { return weights.cols(); }
  Index out_dim() const { return weights.rows(); }
};

/// Feed-forward stack of dense layers followed by an output head.
///
/// The regression head returns the last layer's activations unchanged. The
/// classification head applies a softmax to the last layer's activations
/// divided by the temperature.
template <typename Scalar>
class Network {
 public:
  Network(std::vector<DenseLayer<Scalar>> layers, Head head, Scalar temperature = Scalar(1))
      : layers_(std::move(layers)), head_(head), temperature_(temperature) {
    require_shape(!layers_.empty(), "network needs at least one layer");
    require_domain(temperature_ > Scalar(0) && std::isfinite(double(temperature_)),
                   "temperature must be positive and finite");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      require_shape(layer.bias.size() == layer.out_dim(),
                    "layer " + std::to_string(l) + ": bias length differs from weight rows");
      if (l > 0) {
        require_shape(layer.in_dim() == layers_[l - 1].out_dim(),
                      "layer " + std::to_string(l) + ": input dimension differs from previous output");
      }
      if (!all_finite(layer.weights) || !all_finite(layer.bias)) {
        throw NumericError("layer " + std::to_string(l) + " has non-finite parameters");
      }
    }
    if (head_ == Head::classification) {
      require_shape(output_dim() >= 2, "classification head needs at least two outputs");
    }
  }

  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::vector<DenseLayer<Scalar>>& mutable_layers() { return layers_; }
  Head head() const { return head_; }
  Scalar temperature() const { return temperature_; }
  Index input_dim() const { return layers_.front().in_dim(); }
  Index output_dim() const { return layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }

  Network with_temperature(Scalar t) const { return Network(layers_, head_, t); }

 private:
  std::vector<DenseLayer<Scalar>> layers_;
  Head head_;
  Scalar temperature_;
};

// ---------------------------------------------------------------------------
// Parameter addressing

struct ParamAddress {
  Index layer = 0;
  Index row = 0;
  Index col = 0;  // ignored when is_bias
  bool is_bias = false;

  friend bool operator==(const ParamAddress&, const ParamAddress&) = default;
};

/// Bijection between (layer, row, col | bias) and a global position in the
/// flat parameter vector. Per layer: weights in row-major order, then biases.
class FlatIndex {
 public:
  FlatIndex() = default;

  template <typename Scalar>
  explicit FlatIndex(const Network<Scalar>& net, bool include_biases = true) : include_biases_(include_biases) {
    Index offset = 0;
    for (const auto& layer : net.layers()) {
      offsets_.push_back(offset);
      rows_.push_back(layer.out_dim());
      cols_.push_back(layer.in_dim());
      offset += layer.out_dim() * layer.in_dim() + (include_biases ? layer.out_dim() : 0);
    }
    offsets_.push_back(offset);
  }

  Index size() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t num_layers() const { return rows_.size(); }
  bool include_biases() const { return include_biases_; }
  Index layer_offset(std::size_t l) const { return offsets_[l]; }
  Index layer_size(std::size_t l) const { return offsets_[l + 1] - offsets_[l]; }
  Index rows(std::size_t l) const { return rows_[l]; }
  Index cols(std::size_t l) const { return cols_[l]; }

  Index to_global(const ParamAddress& a) const {
    require_shape(a.layer >= 0 && std::size_t(a.layer) < rows_.size(), "layer out of range");
    const auto l = std::size_t(a.layer);
    require_shape(a.row >= 0 && a.row < rows_[l], "row out of range");
    if (a.is_bias) {
      require_shape(include_biases_, "biases are excluded from this index");
      return offsets_[l] + rows_[l] * cols_[l] + a.row;
    }
    require_shape(a.col >= 0 && a.col < cols_[l], "column out of range");
    return offsets_[l] + a.row * cols_[l] + a.col;
  }

  ParamAddress from_global(Index i) const {
    require_shape(i >= 0 && i < size(), "global index out of range");
    std::size_t l = 0;
    while (offsets_[l + 1] <= i) ++l;
    const Index local = i - offsets_[l];
    const Index nw = rows_[l] * cols_[l];
    if (local < nw) return {Index(l), local / cols_[l], local % cols_[l], false};
    return {Index(l), local - nw, 0, true};
  }

 private:
  std::vector<Index> offsets_;
  std::vector<Index> rows_;
  std::vector<Index> cols_;
  bool include_biases_ = true;
};

template <typename Scalar>
Vec<Scalar> flatten(const Network<Scalar>& net, const FlatIndex& index) {
  Vec<Scalar> w(index.size());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers()[l];
    Index pos = index.layer_offset(l);
    for (Index r = 0; r < layer.out_dim(); ++r)
      for (Index c = 0; c < layer.in_dim(); ++c) w[pos++] = layer.weights(r, c);
    if (index.include_biases())
      for (Index r = 0; r < layer.out_dim(); ++r) w[pos++] = layer.bias[r];
  }
  return w;
}

/// Copy of `net` with its parameters replaced by `w` (biases untouched when
/// the index excludes them).
template <typename Scalar>
Network<Scalar> unflatten(const Network<Scalar>& net, const FlatIndex& index, const Vec<Scalar>& w) {
  require_shape(w.size() == index.size(), "parameter vector length differs from index size");
  auto layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = layers[l];
    Index pos = index.layer_offset(l);
    for (Index r = 0; r < layer.out_dim(); ++r)
      for (Index c = 0; c < layer.in_dim(); ++c) layer.weights(r, c) = w[pos++];
    if (index.include_biases())
      for (Index r = 0; r < layer.out_dim(); ++r) layer.bias[r] = w[pos++];
  }
  return Network<Scalar>(std::move(layers), net.head(), net.temperature());
}

// ---------------------------------------------------------------------------
// Data

enum class LabelKind { none, classes, targets };

template <typename Scalar>
struct Dataset {
  Mat<Scalar> inputs;          // n x d_x
  std::vector<Index> classes;  // classification labels, one per row
  Mat<Scalar> targets;         // n x d_y regression targets

  Index size() const { return inputs.rows(); }
  LabelKind label_kind() const {
    if (!classes.empty()) return LabelKind::classes;
    if (targets.size() > 0) return LabelKind::targets;
    return LabelKind::none;
  }
  bool has_labels() const { return label_kind() != LabelKind::none; }
};

template <typename Scalar>
void check_dataset(const Network<Scalar>& net, const Dataset<Scalar>& data, bool need_labels) {
  if (data.size() < 1) throw DomainError("dataset is empty");
  require_shape(data.inputs.cols() == net.input_dim(), "dataset width differs from network input dimension");
  const auto kind = data.label_kind();
  if (need_labels && kind == LabelKind::none) throw UsageError("objective requires labels but dataset has none");
  if (kind == LabelKind::classes) {
    if (net.head() != Head::classification) throw UsageError("class labels given for a regression network");
    require_shape(Index(data.classes.size()) == data.size(), "label count differs from sample count");
    for (Index c : data.classes)
      require_domain(c >= 0 && c < net.output_dim(), "class label out of range");
  } else if (kind == LabelKind::targets) {
    if (net.head() != Head::regression) throw UsageError("regression targets given for a classification network");
    require_shape(data.targets.rows() == data.size() && data.targets.cols() == net.output_dim(),
                  "regression targets have the wrong shape");
  }
}

// ---------------------------------------------------------------------------
// Forward pass

template <typename Scalar>
Vec<Scalar> softmax(const Vec<Scalar>& logits, Scalar temperature) {
  Vec<Scalar> z = logits / temperature;
  z.array() -= z.maxCoeff();
  Vec<Scalar> e = z.array().exp();
  return e / e.sum();
}

template <typename Scalar>
Vec<Scalar> floor_probabilities(const Vec<Scalar>& p) {
  return p.cwiseMax(Scalar(kProbFloor));
}

/// Intermediate values of one forward evaluation, kept for the backward passes.
template <typename Scalar>
struct ForwardTrace {
  std::vector<Vec<Scalar>> layer_inputs;  // input of layer l
  std::vector<Vec<Scalar>> slopes;        // activation derivative at layer l's pre-activation
  Vec<Scalar> last;                       // last layer's activations (logits for classification)
  Vec<Scalar> output;                     // head output
};

template <typename Scalar>
ForwardTrace<Scalar> trace_forward(const Network<Scalar>& net, const Vec<Scalar>& x) {
  require_shape(x.size() == net.input_dim(), "input has dimension " + std::to_string(x.size()) + ", expected " +
                                                  std::to_string(net.input_dim()));
  ForwardTrace<Scalar> t;
  t.layer_inputs.reserve(net.depth());
  t.slopes.reserve(net.depth());
  Vec<Scalar> a = x;
  for (const auto& layer : net.layers()) {
    t.layer_inputs.push_back(a);
    Vec<Scalar> z = layer.weights * a + layer.bias;
    if (layer.activation == Activation::relu) {
      // sigma(t) = t * 1{t >= 0}, so the slope at 0 is taken as 1.
      Vec<Scalar> slope = (z.array() >= Scalar(0)).template cast<Scalar>();
      a = z.cwiseProduct(slope);
      t.slopes.push_back(std::move(slope));
    } else {
      a = std::move(z);
      t.slopes.push_back(Vec<Scalar>::Ones(a.size()));
    }
  }
  t.last = a;
  t.output = net.head() == Head::classification ? softmax(a, net.temperature()) : a;
  if (!all_finite(t.output)) throw NumericError("forward pass produced a non-finite output");
  return t;
}

template <typename Scalar>
Vec<Scalar> forward(const Network<Scalar>& net, const Vec<Scalar>& x) {
  return trace_forward(net, x).output;
}

// ---------------------------------------------------------------------------
// Reverse mode

namespace detail {

// Pulls back `seeds` (r x out_dim, derivatives with respect to the last
// layer's activations) to an r x m matrix of parameter derivatives.
template <typename Scalar>
Mat<Scalar> pullback(const Network<Scalar>& net, const ForwardTrace<Scalar>& t, const FlatIndex& index,
                     Mat<Scalar> seeds) {
  Mat<Scalar> out(seeds.rows(), index.size());
  for (std::size_t l = net.depth(); l-- > 0;) {
    const auto& layer = net.layers()[l];
    Mat<Scalar> gz = seeds * t.slopes[l].asDiagonal();
    const Vec<Scalar>& a = t.layer_inputs[l];
    const Index off = index.layer_offset(l);
    const Index in = layer.in_dim();
    for (Index j = 0; j < layer.out_dim(); ++j) {
      out.block(0, off + j * in, gz.rows(), in).noalias() = gz.col(j) * a.transpose();
    }
    if (index.include_biases()) out.block(0, off + layer.out_dim() * in, gz.rows(), layer.out_dim()) = gz;
    if (l > 0) seeds = gz * layer.weights;
  }
  return out;
}

// d(head output)/d(last activations).
template <typename Scalar>
Mat<Scalar> head_jacobian(const Network<Scalar>& net, const ForwardTrace<Scalar>& t) {
  const Index c = net.output_dim();
  if (net.head() == Head::regression) return Mat<Scalar>::Identity(c, c);
  const Vec<Scalar>& p = t.output;
  Mat<Scalar> j = Mat<Scalar>(p.asDiagonal()) - p * p.transpose();
  return j / net.temperature();
}

template <typename Scalar>
void require_finite(const Mat<Scalar>& m, const char* what) {
  if (!all_finite(m)) throw NumericError(std::string(what) + " produced a non-finite value");
}

}  // namespace detail

/// Exact derivatives of every output component with respect to every
/// parameter: an output_dim x m matrix.
template <typename Scalar>
Mat<Scalar> jacobian_outputs(const Network<Scalar>& net, const Vec<Scalar>& x, const FlatIndex& index) {
  const auto t = trace_forward(net, x);
  Mat<Scalar> j = detail::pullback(net, t, index, detail::head_jacobian(net, t));
  detail::require_finite(j, "jacobian_outputs");
  return j;
}

template <typename Scalar>
Mat<Scalar> jacobian_outputs(const Network<Scalar>& net, const Vec<Scalar>& x) {
  return jacobian_outputs(net, x, FlatIndex(net));
}

/// Per-sample loss target: a class index for classification, a vector for regression.
template <typename Scalar>
struct Target {
  Index cls = -1;
  Vec<Scalar> values;
};

template <typename Scalar>
Target<Scalar> sample_target(const Dataset<Scalar>& data, Index i) {
  if (data.label_kind() == LabelKind::classes) return {data.classes[std::size_t(i)], {}};
  return {-1, data.targets.row(i).transpose()};
}

namespace detail {

template <typename Scalar>
void check_target(const Network<Scalar>& net, const Target<Scalar>& y) {
  if (net.head() == Head::classification) {
    require_domain(y.cls >= 0 && y.cls < net.output_dim(), "class label out of range");
  } else {
    require_shape(y.values.size() == net.output_dim(), "target length differs from output dimension");
  }
}

}  // namespace detail

/// Cross-entropy at the network temperature (classification) or squared
/// error without a 1/2 factor (regression).
template <typename Scalar>
Scalar loss_from_trace(const Network<Scalar>& net, const ForwardTrace<Scalar>& t, const Target<Scalar>& y) {
  if (net.head() == Head::classification) {
    const Vec<Scalar> z = t.last / net.temperature();
    const Scalar zmax = z.maxCoeff();
    const Scalar lse = zmax + std::log((z.array() - zmax).exp().sum());
    return lse - z[y.cls];
  }
  return (t.output - y.values).squaredNorm();
}

template <typename Scalar>
Scalar loss(const Network<Scalar>& net, const Vec<Scalar>& x, const Target<Scalar>& y) {
  detail::check_target(net, y);
  return loss_from_trace(net, trace_forward(net, x), y);
}

template <typename Scalar>
Vec<Scalar> grad_loss(const Network<Scalar>& net, const Vec<Scalar>& x, const Target<Scalar>& y,
                      const FlatIndex& index) {
  detail::check_target(net, y);
  const auto t = trace_forward(net, x);
  Mat<Scalar> seed(1, net.output_dim());
  if (net.head() == Head::classification) {
    Vec<Scalar> g = t.output;
    g[y.cls] -= Scalar(1);
    seed.row(0) = g.transpose() / net.temperature();
  } else {
    seed.row(0) = Scalar(2) * (t.output - y.values).transpose();
  }
  Mat<Scalar> g = detail::pullback(net, t, index, std::move(seed));
  detail::require_finite(g, "grad_loss");
  return g.row(0).transpose();
}

template <typename Scalar>
Vec<Scalar> grad_loss(const Network<Scalar>& net, const Vec<Scalar>& x, const Target<Scalar>& y) {
  return grad_loss(net, x, y, FlatIndex(net));
}

/// Exact diagonal of the per-sample loss Hessian.
///
/// Both activations are piecewise linear, so the Hessian with respect to a
/// layer's pre-activations is S W^T H W S with S the diagonal of slopes, and
/// a weight W_jk only enters through z_j with coefficient a_k. Hence
/// d2L/dW_jk^2 = a_k^2 * Hz_jj and d2L/db_j^2 = Hz_jj.
template <typename Scalar>
Vec<Scalar> hessian_diag_loss(const Network<Scalar>& net, const Vec<Scalar>& x, const Target<Scalar>& y,
                              const FlatIndex& index) {
  detail::check_target(net, y);
  const auto t = trace_forward(net, x);
  const Index c = net.output_dim();
  Mat<Scalar> h;
  if (net.head() == Head::classification) {
    const Vec<Scalar>& p = t.output;
    h = (Mat<Scalar>(p.asDiagonal()) - p * p.transpose()) / (net.temperature() * net.temperature());
  } else {
    h = Scalar(2) * Mat<Scalar>::Identity(c, c);
  }
  Vec<Scalar> diag(index.size());
  for (std::size_t l = net.depth(); l-- > 0;) {
    const auto& layer = net.layers()[l];
    const Vec<Scalar>& s = t.slopes[l];
    Mat<Scalar> hz = s.asDiagonal() * h * s.asDiagonal();
    const Vec<Scalar> a2 = t.layer_inputs[l].array().square();
    const Index off = index.layer_offset(l);
    const Index in = layer.in_dim();
    for (Index j = 0; j < layer.out_dim(); ++j) diag.segment(off + j * in, in) = hz(j, j) * a2;
    if (index.include_biases()) diag.segment(off + layer.out_dim() * in, layer.out_dim()) = hz.diagonal();
    if (l > 0) h = layer.weights.transpose() * hz * layer.weights;
  }
  if (!all_finite(diag)) throw NumericError("hessian_diag_loss produced a non-finite value");
  return diag;
}

template <typename Scalar>
Vec<Scalar> hessian_diag_loss(const Network<Scalar>& net, const Vec<Scalar>& x, const Target<Scalar>& y) {
  return hessian_diag_loss(net, x, y, FlatIndex(net));
}

template <typename Scalar>
Index argmax(const Vec<Scalar>& v) {
  Index i = 0;
  v.maxCoeff(&i);
  return i;
}

}  // namespace rdc
