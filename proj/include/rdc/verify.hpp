#pragma once

#include <rdc/io.hpp>
#include <rdc/rd_linear.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace rdc {

enum class VerifySuite { linear, relu_prune, relu_quant, hermite, cubic };

std::string to_string(VerifySuite s);
VerifySuite parse_verify_suite(const std::string& s);

struct CheckResult {
  std::string check;
  double value = 0;
  double threshold = 0;
  bool pass = false;
};

struct VerifyConfig {
  std::uint64_t seed = 0;
  int p_max = 40;
  std::string preset;  // "fig2" for linear, "relu8" for relu-prune; empty picks the suite default
  int instances = 0;   // 0 picks the suite default
};

struct VerifyOutput {
  VerifySuite suite = VerifySuite::linear;
  std::vector<CheckResult> checks;
  std::vector<io::VerdictRow> verdicts;  // relu suites only

  bool passed() const;
};

VerifyOutput run_verify(VerifySuite suite, const VerifyConfig& cfg);

void write_checks_csv(std::ostream& os, const VerifyOutput& out, const io::HeaderComments& header);

/// Sigma_W = Sigma_X = diag(3, 2, 1).
LinearSource<double> fig2_source();
LinearSource<double> preset_source(const std::string& name);

/// Random verification instance: w_i ~ N(0, 1), lambda_i ~ U(0.5, 2).
struct ReluInstance {
  VectorXd w;
  VectorXd lambda;
};
ReluInstance relu_instance(std::uint64_t seed, std::uint64_t id, Index m);

}  // namespace rdc
