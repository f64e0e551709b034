#include <rdc/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace rdc::io {

using nlohmann::json;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Models

Network<double> parse_model(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    std::vector<DenseLayer<double>> layers;
    for (const auto& jl : doc.at("layers")) {
      const auto& jw = jl.at("weights");
      const Index rows = Index(jw.size());
      const Index cols = rows > 0 ? Index(jw[0].size()) : 0;
      DenseLayer<double> layer;
      layer.weights.resize(rows, cols);
      for (Index r = 0; r < rows; ++r) {
        require_shape(Index(jw[std::size_t(r)].size()) == cols, "ragged weight matrix");
        for (Index c = 0; c < cols; ++c) layer.weights(r, c) = jw[std::size_t(r)][std::size_t(c)].get<double>();
      }
      const auto& jb = jl.at("bias");
      layer.bias.resize(Index(jb.size()));
      for (std::size_t i = 0; i < jb.size(); ++i) layer.bias[Index(i)] = jb[i].get<double>();
      const auto act = jl.value("activation", std::string("identity"));
      if (act == "relu")
        layer.activation = Activation::relu;
      else if (act == "identity")
        layer.activation = Activation::identity;
      else
        throw UsageError("unknown activation '" + act + "'");
      layers.push_back(std::move(layer));
    }
    const auto head_s = doc.at("head").get<std::string>();
    Head head;
    if (head_s == "regression")
      head = Head::regression;
    else if (head_s == "classification")
      head = Head::classification;
    else
      throw UsageError("unknown head '" + head_s + "'");
    const double t = doc.value("temperature", 1.0);
    return Network<double>(std::move(layers), head, t);
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed model file: ") + e.what());
  }
}

Network<double> load_model(const std::string& path) { return parse_model(read_file(path)); }

std::string model_to_json(const Network<double>& net) {
  // Written by hand so every number keeps 17 significant digits.
  std::ostringstream os;
  os << "{\"layers\":[";
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers()[l];
    if (l) os << ',';
    os << "\n{\"weights\":[";
    for (Index r = 0; r < layer.weights.rows(); ++r) {
      if (r) os << ',';
      os << '[';
      for (Index c = 0; c < layer.weights.cols(); ++c) os << (c ? "," : "") << fmt(layer.weights(r, c));
      os << ']';
    }
    os << "],\"bias\":[";
    for (Index r = 0; r < layer.bias.size(); ++r) os << (r ? "," : "") << fmt(layer.bias[r]);
    os << "],\"activation\":\"" << to_string(layer.activation) << "\"}";
  }
  os << "],\n\"head\":\"" << to_string(net.head()) << "\",\"temperature\":" << fmt(net.temperature()) << "}\n";
  return os.str();
}

void save_model(const Network<double>& net, const std::string& path) { write_file(path, model_to_json(net)); }

// ---------------------------------------------------------------------------
// Datasets

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw UsageError("line " + std::to_string(line_no) + ": '" + s + "' is not a number");
  return v;
}

}  // namespace

Dataset<double> parse_dataset(const std::string& csv_text, const std::vector<std::string>& label_columns, Head head) {
  std::istringstream in(csv_text);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto fields = split_csv_line(t);
    if (header.empty()) {
      header = std::move(fields);
      continue;
    }
    if (fields.size() != header.size())
      throw ShapeError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                       " fields, header has " + std::to_string(header.size()));
    std::vector<double> vals;
    vals.reserve(fields.size());
    for (const auto& f : fields) vals.push_back(parse_double(f, line_no));
    rows.push_back(std::move(vals));
  }
  if (header.empty()) throw UsageError("dataset has no header row");

  std::vector<std::size_t> label_idx;
  for (const auto& name : label_columns) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw UsageError("label column '" + name + "' not in dataset header");
    label_idx.push_back(std::size_t(it - header.begin()));
  }
  std::vector<std::size_t> feat_idx;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (std::find(label_idx.begin(), label_idx.end(), c) == label_idx.end()) feat_idx.push_back(c);

  Dataset<double> data;
  const Index n = Index(rows.size());
  data.inputs.resize(n, Index(feat_idx.size()));
  for (Index i = 0; i < n; ++i)
    for (std::size_t j = 0; j < feat_idx.size(); ++j) data.inputs(i, Index(j)) = rows[std::size_t(i)][feat_idx[j]];
  if (label_idx.empty()) return data;
  if (head == Head::classification) {
    if (label_idx.size() != 1) throw UsageError("classification needs exactly one label column");
    for (Index i = 0; i < n; ++i) {
      const double v = rows[std::size_t(i)][label_idx[0]];
      if (v != std::floor(v) || v < 0) throw DomainError("class labels must be nonnegative integers");
      data.classes.push_back(Index(v));
    }
  } else {
    data.targets.resize(n, Index(label_idx.size()));
    for (Index i = 0; i < n; ++i)
      for (std::size_t j = 0; j < label_idx.size(); ++j) data.targets(i, Index(j)) = rows[std::size_t(i)][label_idx[j]];
  }
  return data;
}

Dataset<double> load_dataset(const std::string& path, const std::vector<std::string>& label_columns, Head head) {
  return parse_dataset(read_file(path), label_columns, head);
}

// ---------------------------------------------------------------------------
// CSV writers

void write_header(std::ostream& os, const HeaderComments& header) {
  for (const auto& [k, v] : header) os << "# " << k << ": " << v << '\n';
}

namespace {

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

void write_importance_csv(std::ostream& os, const ImportanceDiag<double>& imp, const FlatIndex& index,
                          const HeaderComments& header) {
  require_shape(imp.size() == index.size(), "importance length differs from parameter count");
  write_header(os, header);
  os << "global_index,layer,row,col,I,H\n";
  for (Index g = 0; g < index.size(); ++g) {
    const auto a = index.from_global(g);
    os << g << ',' << a.layer << ',' << a.row << ',' << (a.is_bias ? std::string("bias") : std::to_string(a.col)) << ','
       << fmt(imp.quadratic[g]) << ',' << (imp.quartic ? fmt((*imp.quartic)[g]) : "0") << '\n';
  }
}

void write_rd_curve_csv(std::ostream& os, const std::vector<RdPoint<double>>& curve, const HeaderComments& header) {
  write_header(os, header);
  const Index m = curve.empty() ? 0 : curve.front().levels.size();
  os << "D,rate_bits,mu";
  for (Index i = 0; i < m; ++i) os << ",D_" << (i + 1);
  os << '\n';
  for (const auto& p : curve) {
    os << fmt(p.distortion) << ',' << fmt(nats_to_bits(p.rate_nats)) << ',' << fmt(p.mu);
    for (Index i = 0; i < m; ++i) os << ',' << fmt(p.levels[i]);
    os << '\n';
  }
}

void write_achievability_csv(std::ostream& os, const AchievabilityReport& rep, const HeaderComments& header) {
  write_header(os, header);
  os << "row,coordinate,full,level,mean_sq_error,var_hat,var_hat_expected,cov_hat_err,cov_hat_err_se,"
        "identically_zero\n";
  for (std::size_t i = 0; i < rep.coords.size(); ++i) {
    const auto& c = rep.coords[i];
    os << "coordinate," << (i + 1) << ',' << int(c.full) << ',' << fmt(c.level) << ',' << fmt(c.mean_sq_error) << ','
       << fmt(c.var_hat) << ',' << fmt(c.var_hat_expected) << ',' << fmt(c.cov_hat_err) << ','
       << fmt(c.cov_hat_err_se) << ',' << int(c.identically_zero) << '\n';
  }
  os << "# summary: target_distortion,empirical_distortion,empirical_distortion_se,analytic_mi_nats,"
        "waterfill_rate_nats,mu,n_samples\n";
  os << "summary," << fmt(rep.target_distortion) << ',' << fmt(rep.empirical_distortion) << ','
     << fmt(rep.empirical_distortion_se) << ',' << fmt(rep.analytic_mi_nats) << ',' << fmt(rep.waterfill_rate_nats)
     << ',' << fmt(rep.mu) << ',' << rep.n_samples << ",,\n";
}

void write_report_csv(std::ostream& os, const CompressionReport& rep, const HeaderComments& header) {
  write_header(os, header);
  os << "method,compressor,param,ratio,mse,kl,supervised_sq,accuracy,cross_entropy,loss_shift\n";
  for (const auto& r : rep.rows) {
    os << r.method << ',' << to_string(r.compressor) << ',' << fmt(r.param) << ',' << fmt(r.ratio) << ','
       << fmt(r.mse) << ',' << opt_fmt(r.kl) << ',' << opt_fmt(r.supervised_sq) << ',' << opt_fmt(r.accuracy) << ','
       << opt_fmt(r.cross_entropy) << ',' << opt_fmt(r.loss_shift) << '\n';
  }
}

void write_plot_data(std::ostream& os, const CompressionReport& rep, const HeaderComments& header) {
  write_header(os, header);
  os << "x,y,series\n";
  auto emit = [&](const ReportRow& r, const char* metric, const std::optional<double>& v) {
    if (v) os << fmt(r.ratio) << ',' << fmt(*v) << ',' << r.method << ':' << metric << '\n';
  };
  for (const auto& r : rep.rows) {
    emit(r, "mse", r.mse);
    emit(r, "kl", r.kl);
    emit(r, "supervised_sq", r.supervised_sq);
    emit(r, "accuracy", r.accuracy);
    emit(r, "cross_entropy", r.cross_entropy);
  }
}

void write_verdict_csv(std::ostream& os, const std::vector<VerdictRow>& rows, const HeaderComments& header) {
  write_header(os, header);
  os << "instance_id,objective_argmin,mse_argmin,agree,gap\n";
  for (const auto& r : rows)
    os << r.instance_id << ',' << r.objective_argmin << ',' << r.mse_argmin << ',' << int(r.agree) << ','
       << fmt(r.gap) << '\n';
}

std::string compression_sidecar_json(const CompressedModel& cm, const FlatIndex& index) {
  json doc;
  doc["ratio"] = cm.ratio;
  doc["include_biases"] = index.include_biases();
  json segs = json::array();
  for (std::size_t s = 0; s < cm.per_layer.size(); ++s) {
    json j;
    j["segment"] = cm.per_layer[s].layer;
    j["params"] = cm.per_layer[s].params;
    j["objective"] = cm.per_layer[s].objective;
    if (s < cm.masks.size()) {
      std::vector<int> keep(cm.masks[s].keep.begin(), cm.masks[s].keep.end());
      j["keep"] = keep;
    }
    if (s < cm.codebooks.size()) {
      const auto& cb = cm.codebooks[s];
      j["centroids"] = std::vector<double>(cb.centroids.data(), cb.centroids.data() + cb.centroids.size());
      j["assignments"] = cb.assignments;
      j["cluster_sizes"] = cb.cluster_sizes;
      j["iterations"] = cb.iterations;
    }
    segs.push_back(std::move(j));
  }
  doc["segments"] = std::move(segs);
  return doc.dump(1) + "\n";
}

}  // namespace rdc::io
