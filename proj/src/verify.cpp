#include <rdc/compress.hpp>
#include <rdc/relu_oracle.hpp>
#include <rdc/rng.hpp>
#include <rdc/verify.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

namespace rdc {

std::string to_string(VerifySuite s) {
  switch (s) {
    case VerifySuite::linear: return "linear";
    case VerifySuite::relu_prune: return "relu-prune";
    case VerifySuite::relu_quant: return "relu-quant";
    case VerifySuite::hermite: return "hermite";
    case VerifySuite::cubic: return "cubic";
  }
  return "?";
}

VerifySuite parse_verify_suite(const std::string& s) {
  for (auto v : {VerifySuite::linear, VerifySuite::relu_prune, VerifySuite::relu_quant, VerifySuite::hermite,
                 VerifySuite::cubic})
    if (to_string(v) == s) return v;
  throw UsageError("unknown verify suite '" + s + "'");
}

bool VerifyOutput::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

LinearSource<double> fig2_source() {
  const VectorXd d = (VectorXd(3) << 3.0, 2.0, 1.0).finished();
  return LinearSource<double>(d, d);
}

LinearSource<double> preset_source(const std::string& name) {
  if (name == "fig2") return fig2_source();
  throw UsageError("unknown source preset '" + name + "'");
}

ReluInstance relu_instance(std::uint64_t seed, std::uint64_t id, Index m) {
  auto rng = make_engine(seed, stream::kInstances, id);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  ReluInstance inst{VectorXd(m), VectorXd(m)};
  for (Index i = 0; i < m; ++i) inst.w[i] = normal(rng);
  for (Index i = 0; i < m; ++i) inst.lambda[i] = unif(rng);
  return inst;
}

namespace {

constexpr double kInfo = std::numeric_limits<double>::quiet_NaN();

CheckResult at_most(std::string name, double value, double threshold) {
  return {std::move(name), value, threshold, value <= threshold};
}

CheckResult info(std::string name, double value) { return {std::move(name), value, kInfo, true}; }

double max_abs_diff(const VectorXd& a, const VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::string mask_string(std::uint32_t mask, int m) {
  std::string s;
  for (int i = 0; i < m; ++i) s += (mask >> i) & 1u ? '1' : '0';
  return s;
}

std::string join_masks(const std::vector<std::uint32_t>& masks, int m) {
  std::string s;
  for (std::size_t i = 0; i < masks.size(); ++i) s += (i ? "|" : "") + mask_string(masks[i], m);
  return s;
}

std::string labels_string(const std::vector<int>& a) {
  std::string s;
  for (int v : a) s += char('0' + v);
  return s;
}

// ---------------------------------------------------------------------------

void linear_suite(const VerifyConfig& cfg, VerifyOutput& out) {
  const std::string preset = cfg.preset.empty() ? "fig2" : cfg.preset;
  const auto src = preset_source(preset);
  const double tol = 1e-9;

  const auto s3 = waterfill(src, 3.0);
  const auto s9 = waterfill(src, 9.0);
  out.checks.push_back(at_most("D3_mu_error", std::abs(s3.mu - 1.0), tol));
  out.checks.push_back(
      at_most("D3_levels_error", max_abs_diff(s3.levels, (VectorXd(3) << 1.0 / 3, 0.5, 1.0).finished()), tol));
  out.checks.push_back(at_most("D3_rate_nats_error", std::abs(s3.rate_nats - std::log(6.0)), tol));
  out.checks.push_back(at_most("D9_mu_error", std::abs(s9.mu - 4.0), tol));
  out.checks.push_back(
      at_most("D9_levels_error", max_abs_diff(s9.levels, (VectorXd(3) << 4.0 / 3, 2.0, 1.0).finished()), tol));
  out.checks.push_back(at_most("Dmax_rate_nats", std::abs(waterfill(src, src.max_distortion()).rate_nats), tol));

  const auto rep = achievability_report(src, 3.0, 100000, cfg.seed);
  out.checks.push_back(at_most("achievability_distortion_rel_error",
                               std::abs(rep.empirical_distortion - 3.0) / 3.0, 0.02));
  double worst_cov = 0;
  bool zeros = true;
  for (const auto& c : rep.coords) {
    if (c.full)
      zeros = zeros && c.identically_zero;
    else
      worst_cov = std::max(worst_cov, std::abs(c.cov_hat_err) / c.cov_hat_err_se);
  }
  out.checks.push_back(at_most("achievability_cov_in_std_errors", worst_cov, 3.0));
  out.checks.push_back({"achievability_full_coordinates_zero", zeros ? 1.0 : 0.0, 1.0, zeros});
  out.checks.push_back(
      at_most("achievability_mi_minus_rate", std::abs(rep.analytic_mi_nats - rep.waterfill_rate_nats), 1e-12));

  // KKT structure and curve shape on random diagonal sources.
  const int n = cfg.instances > 0 ? cfg.instances : 100;
  double worst_kkt = 0, worst_increase = -std::numeric_limits<double>::infinity();
  double worst_concavity = -std::numeric_limits<double>::infinity();
  for (int id = 0; id < n; ++id) {
    auto rng = make_engine(cfg.seed, stream::kInstances, std::uint64_t(id));
    const Index m = std::uniform_int_distribution<Index>(1, 8)(rng);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    VectorXd sw(m), lx(m);
    for (Index i = 0; i < m; ++i) sw[i] = u(rng);
    for (Index i = 0; i < m; ++i) lx[i] = u(rng);
    const LinearSource<double> s(sw, lx);
    const double d = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * s.max_distortion();
    if (!(d > 0)) continue;
    const auto sol = waterfill(s, d);
    for (Index i = 0; i < m; ++i)
      if (sol.levels[i] < s.sigma_w[i])
        worst_kkt = std::max(worst_kkt, std::abs(lx[i] * sol.levels[i] - sol.mu) / std::max(1.0, sol.mu));
    const auto curve = rd_curve(s, uniform_distortion_grid(s, 50));
    for (std::size_t k = 1; k < curve.size(); ++k)
      worst_increase = std::max(worst_increase, curve[k].rate_nats - curve[k - 1].rate_nats);
    for (std::size_t k = 1; k + 1 < curve.size(); ++k)
      worst_concavity = std::max(worst_concavity, -(curve[k + 1].rate_nats - 2 * curve[k].rate_nats +
                                                    curve[k - 1].rate_nats));
  }
  out.checks.push_back(at_most("kkt_lambda_level_spread", worst_kkt, tol));
  out.checks.push_back(at_most("curve_max_increase", worst_increase, 1e-12));
  out.checks.push_back(at_most("curve_max_concavity", worst_concavity, 1e-12));
}

void relu_prune_suite(const VerifyConfig& cfg, VerifyOutput& out) {
  const std::string preset = cfg.preset.empty() ? "relu8" : cfg.preset;
  if (preset != "relu8") throw UsageError("unknown relu-prune preset '" + preset + "'");
  const int m = 8, keep = 4;
  const int n = cfg.instances > 0 ? cfg.instances : 100;
  const auto hc = hermite_coeffs(cfg.p_max);
  int agree = 0;
  double worst_gap = 0;
  for (int id = 0; id < n; ++id) {
    const auto inst = relu_instance(cfg.seed, std::uint64_t(id), m);
    const auto v = verify_prune_optimality(inst.w, inst.lambda, keep, hc, 1e-9);
    agree += v.agree;
    worst_gap = std::max(worst_gap, v.gap);
    out.verdicts.push_back(
        {std::size_t(id), join_masks(v.objective_argmin, m), join_masks(v.mse_argmin, m), v.agree, v.gap});
  }
  out.checks.push_back({"instances_agreeing", double(agree), double(n), agree == n});
  out.checks.push_back(info("worst_mse_gap", worst_gap));
}

void relu_quant_suite(const VerifyConfig& cfg, VerifyOutput& out) {
  const int m = 6, k = 2;
  const int n = cfg.instances > 0 ? cfg.instances : 30;
  const auto hc = hermite_coeffs(cfg.p_max);
  int agree = 0;
  double worst_gap = 0, worst_centroid_gap = 0;
  for (int id = 0; id < n; ++id) {
    const auto inst = relu_instance(cfg.seed, std::uint64_t(id), m);
    const auto v = verify_quant_optimality(inst.w, inst.lambda, k, hc, 1e-9);
    agree += v.agree;
    worst_gap = std::max(worst_gap, v.gap);
    worst_centroid_gap = std::max(worst_centroid_gap, v.mse_with_objective_centroids - v.mse_at_objective_argmin);
    out.verdicts.push_back({std::size_t(id), labels_string(v.objective_assignment), labels_string(v.mse_assignment),
                            v.agree, v.gap});
  }
  out.checks.push_back({"instances_agreeing", double(agree), double(n), agree == n});
  out.checks.push_back(info("worst_mse_gap", worst_gap));
  out.checks.push_back(info("worst_weighted_mean_centroid_excess_mse", worst_centroid_gap));
}

void hermite_suite(const VerifyConfig& cfg, VerifyOutput& out) {
  const auto hc = hermite_coeffs(cfg.p_max);
  const double qtol = 1e-12;
  out.checks.push_back(
      at_most("sigma0_error", std::abs(hc.sigma_hat[0] - 1.0 / std::sqrt(2.0 * std::numbers::pi)), qtol));
  out.checks.push_back(at_most("sigma1_error", std::abs(hc.sigma_hat[1] - 0.5), qtol));
  double odd = 0;
  for (int p = 3; p <= hc.p_max(); p += 2) odd = std::max(odd, std::abs(hc.sigma_hat[p]));
  out.checks.push_back(at_most("odd_sigma_max_abs", odd, qtol));
  out.checks.push_back(at_most("parseval_deficit", std::abs(hc.parseval_sum() - 0.5), 1e-3));
  out.checks.push_back(at_most("closed_form_mismatch", hc.closed_form_mismatch(), 1e-10));
  out.checks.push_back(info("printed_form_mismatch", hc.printed_form_mismatch()));

  const int n = cfg.instances > 0 ? cfg.instances : 20;
  const long samples = 1000000;
  double worst_mse = 0, worst_half = 0;
  for (int id = 0; id < n; ++id) {
    const auto inst = relu_instance(cfg.seed, std::uint64_t(id), 4);
    auto rng = make_engine(cfg.seed, stream::kMonteCarlo, std::uint64_t(id));
    std::normal_distribution<double> normal(0.0, 0.5);
    VectorXd w_hat = inst.w;
    for (Index i = 0; i < w_hat.size(); ++i) w_hat[i] += normal(rng);
    if (id % 2 == 1) w_hat.tail(2).setZero();
    const double analytic = analytic_relu_mse(inst.w, w_hat, inst.lambda, hc);
    const auto mc = mc_relu_mse(inst.w, w_hat, inst.lambda, samples, rng);
    worst_mse = std::max(worst_mse, std::abs(analytic - mc.mean) / mc.std_error);
    const auto half = mc_half_gaussian(inst.w, w_hat, inst.lambda, samples, rng);
    const double exact = 0.5 * relu_weighted_objective(inst.w, w_hat, inst.lambda);
    worst_half = std::max(worst_half, std::abs(exact - half.mean) / half.std_error);
  }
  out.checks.push_back(at_most("analytic_vs_mc_std_errors", worst_mse, 3.0));
  out.checks.push_back(at_most("half_gaussian_std_errors", worst_half, 3.0));
}

// Bisection in long double on a sign-change bracket; the reference for cubic roots.
double bisect_cubic(double a, double b, double c, double d) {
  using LD = long double;
  auto f = [&](LD x) { return ((LD(a) * x + LD(b)) * x + LD(c)) * x + LD(d); };
  LD lo = -1, hi = 1;
  while (f(lo) > 0) lo *= 2;
  while (f(hi) < 0) hi *= 2;
  for (int it = 0; it < 500; ++it) {
    const LD mid = lo + (hi - lo) / 2;
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0 ? lo : hi) = mid;
  }
  return double(lo + (hi - lo) / 2);
}

void cubic_suite(const VerifyConfig& cfg, VerifyOutput& out) {
  {
    auto rng = make_engine(cfg.seed, stream::kInstances, 0);
    std::uniform_real_distribution<double> ua(0.1, 10.0), uc(0.01, 5.0);
    std::normal_distribution<double> nb(0.0, 5.0), nd(0.0, 10.0);
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
      const double a = ua(rng), b = nb(rng);
      const double c = b * b / (3 * a) + uc(rng), d = nd(rng);
      const double x = cubic_real_root(a, b, c, d);
      const double ref = bisect_cubic(a, b, c, d);
      worst = std::max(worst, std::abs(x - ref) / std::max(1.0, std::abs(ref)));
    }
    out.checks.push_back(at_most("root_vs_bisection", worst, 1e-10));
  }

  const int runs = cfg.instances > 0 ? cfg.instances : 100;
  double worst_delta0 = -std::numeric_limits<double>::infinity();
  double worst_increase = -std::numeric_limits<double>::infinity();
  long cubics = 0;
  bool degenerate_exact = true;
  for (int r = 0; r < runs; ++r) {
    auto rng = make_engine(cfg.seed, stream::kInstances, std::uint64_t(r) + 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> ui(0.01, 1.0), uh(0.0, 1.0);
    const Index m = 200;
    VectorXd w(m), imp(m), h(m);
    for (Index i = 0; i < m; ++i) w[i] = normal(rng);
    for (Index i = 0; i < m; ++i) imp[i] = ui(rng);
    for (Index i = 0; i < m; ++i) h[i] = uh(rng);
    KMeansOptions opt;
    opt.k = std::uniform_int_distribution<Index>(2, 8)(rng);
    opt.iters = 50;
    opt.seed = derive_seed(cfg.seed, stream::kKMeansInit, std::uint64_t(r));
    const auto cb = quartic_weighted_kmeans(w, imp, h, opt);
    for (double d0 : cb.delta0_trace) worst_delta0 = std::max(worst_delta0, d0);
    cubics += long(cb.delta0_trace.size());
    for (std::size_t t = 1; t < cb.objective_trace.size(); ++t)
      worst_increase = std::max(worst_increase, (cb.objective_trace[t] - cb.objective_trace[t - 1]) /
                                                    std::max(std::abs(cb.objective_trace[t - 1]), 1e-300));
    const auto plain = weighted_kmeans(w, imp, opt);
    const auto zero_h = quartic_weighted_kmeans(w, imp, VectorXd(VectorXd::Zero(m)), opt);
    degenerate_exact = degenerate_exact && plain.assignments == zero_h.assignments &&
                       plain.centroids.size() == zero_h.centroids.size() &&
                       (plain.centroids.array() == zero_h.centroids.array()).all() &&
                       plain.objective_trace == zero_h.objective_trace;
  }
  out.checks.push_back({"max_delta0", worst_delta0, 0.0, cubics > 0 && worst_delta0 < 0});
  out.checks.push_back(info("cubics_solved", double(cubics)));
  out.checks.push_back(at_most("max_relative_objective_increase", worst_increase, 1e-12));
  out.checks.push_back({"zero_quartic_matches_weighted_kmeans", degenerate_exact ? 1.0 : 0.0, 1.0, degenerate_exact});
}

}  // namespace

VerifyOutput run_verify(VerifySuite suite, const VerifyConfig& cfg) {
  require_domain(cfg.p_max >= 1, "p_max must be at least 1");
  require_domain(cfg.instances >= 0, "instance count must be nonnegative");
  VerifyOutput out;
  out.suite = suite;
  switch (suite) {
    case VerifySuite::linear: linear_suite(cfg, out); break;
    case VerifySuite::relu_prune: relu_prune_suite(cfg, out); break;
    case VerifySuite::relu_quant: relu_quant_suite(cfg, out); break;
    case VerifySuite::hermite: hermite_suite(cfg, out); break;
    case VerifySuite::cubic: cubic_suite(cfg, out); break;
  }
  return out;
}

void write_checks_csv(std::ostream& os, const VerifyOutput& out, const io::HeaderComments& header) {
  io::write_header(os, header);
  os << "suite,check,value,threshold,pass\n";
  for (const auto& c : out.checks) {
    os << to_string(out.suite) << ',' << c.check << ',' << io::fmt(c.value) << ','
       << (std::isnan(c.threshold) ? std::string("NA") : io::fmt(c.threshold)) << ','
       << (c.pass ? "pass" : "FAIL") << '\n';
  }
}

}  // namespace rdc
