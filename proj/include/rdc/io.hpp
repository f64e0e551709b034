#pragma once

#include <rdc/compress.hpp>
#include <rdc/importance.hpp>
#include <rdc/metrics.hpp>
#include <rdc/net.hpp>
#include <rdc/rd_linear.hpp>
#include <rdc/relu_oracle.hpp>

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace rdc::io {

/// Key/value lines written as `# key: value` at the top of every output file.
using HeaderComments = std::vector<std::pair<std::string, std::string>>;

/// Shortest decimal form that round-trips: 17 significant digits.
std::string fmt(double v);

Network<double> parse_model(const std::string& json_text);
Network<double> load_model(const std::string& path);
std::string model_to_json(const Network<double>& net);
void save_model(const Network<double>& net, const std::string& path);

/// CSV with a header row. `label_columns` names the label column(s): one column
/// of class indices for classification, one column per output for regression.
/// Every other column is an input feature, in file order.
Dataset<double> parse_dataset(const std::string& csv_text, const std::vector<std::string>& label_columns, Head head);
Dataset<double> load_dataset(const std::string& path, const std::vector<std::string>& label_columns, Head head);

void write_header(std::ostream& os, const HeaderComments& header);

void write_importance_csv(std::ostream& os, const ImportanceDiag<double>& imp, const FlatIndex& index,
                          const HeaderComments& header);
void write_rd_curve_csv(std::ostream& os, const std::vector<RdPoint<double>>& curve, const HeaderComments& header);
void write_achievability_csv(std::ostream& os, const AchievabilityReport& rep, const HeaderComments& header);
void write_report_csv(std::ostream& os, const CompressionReport& rep, const HeaderComments& header);
/// Long-format (x, y, series) triples: x is the achieved ratio, one series per method and metric.
void write_plot_data(std::ostream& os, const CompressionReport& rep, const HeaderComments& header);

struct VerdictRow {
  std::size_t instance_id = 0;
  std::string objective_argmin;
  std::string mse_argmin;
  bool agree = false;
  double gap = 0;
};
void write_verdict_csv(std::ostream& os, const std::vector<VerdictRow>& rows, const HeaderComments& header);

/// Masks or codebooks of a compressed model, one entry per segment.
std::string compression_sidecar_json(const CompressedModel& cm, const FlatIndex& index);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace rdc::io
