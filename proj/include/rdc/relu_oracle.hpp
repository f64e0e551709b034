#pragma once

#include <rdc/rng.hpp>
#include <rdc/types.hpp>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace rdc {

// ---------------------------------------------------------------------------
// Quadrature

struct QuadratureRule {
  VectorXd nodes;
  VectorXd weights;
};

/// Gauss rule for the weight t^alpha e^{-t} on [0, inf), from the
/// eigen-decomposition of the Jacobi matrix (Golub-Welsch).
inline QuadratureRule gauss_laguerre(int n, double alpha = 0.0) {
  require_domain(n >= 1 && alpha > -1.0, "gauss_laguerre needs n >= 1 and alpha > -1");
  MatrixXd jac = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    jac(i, i) = 2.0 * i + alpha + 1.0;
    if (i > 0) {
      const double off = std::sqrt(double(i) * (double(i) + alpha));
      jac(i, i - 1) = off;
      jac(i - 1, i) = off;
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(jac);
  if (eig.info() != Eigen::Success) throw NumericError("Golub-Welsch eigensolver failed");
  const double mu0 = std::tgamma(alpha + 1.0);
  QuadratureRule rule{eig.eigenvalues(), mu0 * eig.eigenvectors().row(0).transpose().array().square().matrix()};
  return rule;
}

/// h_0(z)..h_pmax(z), the probabilists' Hermite polynomials normalized to
/// unit norm under the standard Gaussian.
template <typename Scalar>
Vec<Scalar> hermite_orthonormal(int p_max, Scalar z) {
  Vec<Scalar> h(p_max + 1);
  h[0] = Scalar(1);
  if (p_max >= 1) h[1] = z;
  for (int p = 1; p < p_max; ++p) {
    h[p + 1] = (z * h[p] - std::sqrt(Scalar(p)) * h[p - 1]) / std::sqrt(Scalar(p + 1));
  }
  return h;
}

inline double double_factorial(int n) {
  double r = 1;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

/// ReLU expansion coefficients in the orthonormal Hermite basis.
struct HermiteCoeffs {
  VectorXd sigma_hat;  // quadrature values, the ones used downstream
  VectorXd closed_form;
  VectorXd printed_form;
  int nodes = 0;

  int p_max() const { return int(sigma_hat.size()) - 1; }
  double parseval_sum() const { return sigma_hat.squaredNorm(); }
  /// Largest |quadrature - closed form| over the even orders p >= 2.
  double closed_form_mismatch() const;
  double printed_form_mismatch() const;
};

/// Closed form of sigma_hat_p: 1/sqrt(2 pi), 1/2, zero for odd p >= 3, and
/// (-1)^(p/2 + 1) (p-3)!! / sqrt(2 pi p!) for even p >= 2.
inline double relu_hermite_closed_form(int p) {
  if (p == 0) return 1.0 / std::sqrt(2.0 * std::numbers::pi);
  if (p == 1) return 0.5;
  if (p % 2 == 1) return 0.0;
  const double sign = (p / 2) % 2 == 1 ? 1.0 : -1.0;
  return sign * double_factorial(p - 3) / std::sqrt(2.0 * std::numbers::pi * std::tgamma(p + 1.0));
}

/// The even-order formula ((p-3)!!)^2 / sqrt(2 pi p!) as commonly printed;
/// kept only for comparison against quadrature.
inline double relu_hermite_printed_form(int p) {
  if (p < 2 || p % 2 == 1) return relu_hermite_closed_form(p);
  const double f = double_factorial(p - 3);
  return f * f / std::sqrt(2.0 * std::numbers::pi * std::tgamma(p + 1.0));
}

inline double HermiteCoeffs::closed_form_mismatch() const {
  double worst = 0;
  for (int p = 2; p <= p_max(); p += 2) worst = std::max(worst, std::abs(sigma_hat[p] - closed_form[p]));
  return worst;
}

inline double HermiteCoeffs::printed_form_mismatch() const {
  double worst = 0;
  for (int p = 2; p <= p_max(); p += 2) worst = std::max(worst, std::abs(sigma_hat[p] - printed_form[p]));
  return worst;
}

/// sigma_hat_p = E[relu(Z) h_p(Z)] = int_0^inf z h_p(z) phi(z) dz. With
/// t = z^2/2 this is (2 pi)^{-1/2} int_0^inf e^{-t} h_p(sqrt(2t)) dt; for
/// even p the integrand is a polynomial in t (Gauss-Laguerre, alpha = 0), for
/// odd p it is sqrt(t) times a polynomial (alpha = 1/2). Both rules are exact
/// once nodes > p/2 + 1, so the ReLU kink costs no accuracy. More nodes than
/// that only hurts: far-out nodes carry weights below what the eigenvectors
/// resolve, multiplied by very large h_p. nodes = 0 picks p_max/2 + 2.
inline HermiteCoeffs hermite_coeffs(int p_max, int nodes = 0) {
  require_domain(p_max >= 1, "p_max must be at least 1");
  if (nodes == 0) nodes = p_max / 2 + 2;
  require_domain(nodes > p_max / 2 + 1, "too few quadrature nodes for p_max");
  const auto even = gauss_laguerre(nodes, 0.0);
  const auto odd = gauss_laguerre(nodes, 0.5);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  HermiteCoeffs hc;
  hc.nodes = nodes;
  hc.sigma_hat = VectorXd::Zero(p_max + 1);
  hc.closed_form = VectorXd::Zero(p_max + 1);
  hc.printed_form = VectorXd::Zero(p_max + 1);
  for (int k = 0; k < nodes; ++k) {
    if (even.weights[k] != 0.0) {
      const double t = even.nodes[k];
      const VectorXd h = hermite_orthonormal(p_max, std::sqrt(2.0 * t));
      for (int p = 0; p <= p_max; p += 2) hc.sigma_hat[p] += even.weights[k] * h[p];
    }
    if (odd.weights[k] != 0.0) {
      const double t = odd.nodes[k];
      const VectorXd h = hermite_orthonormal(p_max, std::sqrt(2.0 * t));
      for (int p = 1; p <= p_max; p += 2) hc.sigma_hat[p] += odd.weights[k] * h[p] / std::sqrt(t);
    }
  }
  hc.sigma_hat *= inv_sqrt_2pi;
  for (int p = 0; p <= p_max; ++p) {
    hc.closed_form[p] = relu_hermite_closed_form(p);
    hc.printed_form[p] = relu_hermite_printed_form(p);
  }
  return hc;
}

/// sum_{p <= p_max} sigma_hat_p^2 rho^p: truncated E[relu(u.z) relu(v.z)] for unit u, v with u.v = rho.
inline double relu_kernel_series(const HermiteCoeffs& hc, double rho) {
  double acc = 0, pw = 1;
  for (int p = 0; p <= hc.p_max(); ++p) {
    acc += hc.sigma_hat[p] * hc.sigma_hat[p] * pw;
    pw *= rho;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Quadratic forms under a diagonal input covariance

/// Quadratic forms of w and w' under diagonal Sigma_X, with the aliases
/// A = w'Sw, B = w'^T S (w' - w), C = (w - w')^T S (w - w').
struct DpTerms {
  double a2 = 0;     // w^T S w
  double b2 = 0;     // w'^T S w'
  double cross = 0;  // w^T S w'
  double A = 0, B = 0, C = 0;

  double rho() const {
    const double den = std::sqrt(a2 * b2);
    return den > 0 ? std::clamp(cross / den, -1.0, 1.0) : 0.0;
  }
};

inline void check_diag_cov(const VectorXd& w, const VectorXd& w_hat, const VectorXd& lambda) {
  require_shape(w.size() == w_hat.size() && w.size() == lambda.size(), "w, w' and diag(Sigma_X) differ in length");
  require_domain((lambda.array() > 0).all(), "Sigma_X diagonal must be positive");
}

inline DpTerms dp_terms(const VectorXd& w, const VectorXd& w_hat, const VectorXd& lambda) {
  check_diag_cov(w, w_hat, lambda);
  DpTerms t;
  t.a2 = (lambda.array() * w.array().square()).sum();
  t.b2 = (lambda.array() * w_hat.array().square()).sum();
  t.cross = (lambda.array() * w.array() * w_hat.array()).sum();
  t.A = t.a2;
  t.B = (lambda.array() * w_hat.array() * (w_hat - w).array()).sum();
  t.C = (lambda.array() * (w - w_hat).array().square()).sum();
  return t;
}

/// D_p = A^p - 2 (A + B - C)^p + (A + 2B - C)^p.
inline double dp_term(const DpTerms& t, int p) {
  require_domain(p >= 0, "p must be nonnegative");
  return std::pow(t.A, p) - 2.0 * std::pow(t.A + t.B - t.C, p) + std::pow(t.A + 2.0 * t.B - t.C, p);
}

/// (w - w')^T Sigma_X (w - w').
inline double relu_weighted_objective(const VectorXd& w, const VectorXd& w_hat, const VectorXd& lambda) {
  check_diag_cov(w, w_hat, lambda);
  return (lambda.array() * (w - w_hat).array().square()).sum();
}

/// E[(relu(w^T X) - relu(w'^T X))^2] for X ~ N(0, diag lambda), from the
/// truncated Hermite series. Positive homogeneity reduces non-unit vectors
/// to the unit case: with a = |w|_S, b = |w'|_S, rho = w^T S w' / (ab),
///   MSE = a^2/2 + b^2/2 - 2 a b sum_p sigma_hat_p^2 rho^p.
inline double analytic_relu_mse(const VectorXd& w, const VectorXd& w_hat, const VectorXd& lambda,
                                const HermiteCoeffs& hc) {
  const auto t = dp_terms(w, w_hat, lambda);
  const double a = std::sqrt(t.a2), b = std::sqrt(t.b2);
  const double cross = (a > 0 && b > 0) ? 2.0 * a * b * relu_kernel_series(hc, t.rho()) : 0.0;
  return std::max(0.0, 0.5 * t.a2 + 0.5 * t.b2 - cross);
}

/// Worst-case effect of truncating the series: (1/2 - sum sigma_hat_p^2) * 2ab.
inline double relu_mse_truncation_bound(const VectorXd& w, const VectorXd& w_hat, const VectorXd& lambda,
                                        const HermiteCoeffs& hc) {
  const auto t = dp_terms(w, w_hat, lambda);
  return std::max(0.0, 0.5 - hc.parseval_sum()) * 2.0 * std::sqrt(t.a2 * t.b2);
}

// ---------------------------------------------------------------------------
// Monte Carlo references

struct McEstimate {
  double mean = 0;
  double std_error = 0;
};

namespace detail {

template <typename F>
McEstimate mc_mean(long n, F&& sample) {
  double s = 0, s2 = 0;
  for (long i = 0; i < n; ++i) {
    const double v = sample();
    s += v;
    s2 += v * v;
  }
  const double mean = s / double(n);
  return {mean, std::sqrt(std::max(0.0, s2 / double(n) - mean * mean) / double(n))};
}

}  // namespace detail

/// Monte Carlo E[(relu(w^T X) - relu(w'^T X))^2], X ~ N(0, diag lambda).
inline McEstimate mc_relu_mse(const VectorXd& w, const VectorXd& w_hat, const VectorXd& lambda, long n, Engine& rng) {
  check_diag_cov(w, w_hat, lambda);
  std::normal_distribution<double> normal(0.0, 1.0);
  const VectorXd sd = lambda.cwiseSqrt();
  VectorXd x(w.size());
  return detail::mc_mean(n, [&] {
    for (Index i = 0; i < x.size(); ++i) x[i] = sd[i] * normal(rng);
    const double d = std::max(0.0, w.dot(x)) - std::max(0.0, w_hat.dot(x));
    return d * d;
  });
}

/// Monte Carlo E[1{w^T X >= 0} ((w - w')^T X)^2]; equals half the weighted objective.
inline McEstimate mc_half_gaussian(const VectorXd& w, const VectorXd& w_hat, const VectorXd& lambda, long n,
                                   Engine& rng) {
  check_diag_cov(w, w_hat, lambda);
  std::normal_distribution<double> normal(0.0, 1.0);
  const VectorXd sd = lambda.cwiseSqrt();
  const VectorXd diff = w - w_hat;
  VectorXd x(w.size());
  return detail::mc_mean(n, [&] {
    for (Index i = 0; i < x.size(); ++i) x[i] = sd[i] * normal(rng);
    const double proj = diff.dot(x);
    return w.dot(x) >= 0 ? proj * proj : 0.0;
  });
}

// ---------------------------------------------------------------------------
// Exhaustive verifiers

inline bool within_tie(double v, double best, double tol) {
  return v <= best + tol * std::abs(best) + 1e-15;
}

struct PruneVerdict {
  std::vector<std::uint32_t> objective_argmin;  // keep-masks as bitsets
  std::vector<std::uint32_t> mse_argmin;
  double objective_min = 0;
  double mse_min = 0;
  double mse_at_objective_argmin = 0;
  bool agree = false;  // the two co-minimizer sets coincide
  double gap = 0;      // mse at the objective argmin minus the minimum mse
};

/// Enumerates every pruning mask keeping `keep` of the m weights and compares
/// the argmin of the weighted objective with the argmin of the analytic MSE.
inline PruneVerdict verify_prune_optimality(const VectorXd& w, const VectorXd& lambda, int keep,
                                            const HermiteCoeffs& hc, double tol = 1e-9) {
  const int m = int(w.size());
  require_domain(m >= 1 && m <= 20, "pruning enumeration supports 1 <= m <= 20");
  require_domain(keep >= 0 && keep <= m, "keep count out of range");
  require_shape(lambda.size() == w.size(), "lambda length differs from w");
  std::vector<std::uint32_t> masks;
  std::vector<double> obj, mse;
  VectorXd w_hat(m);
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    if (std::popcount(mask) != keep) continue;
    for (int i = 0; i < m; ++i) w_hat[i] = (mask >> i) & 1u ? w[i] : 0.0;
    masks.push_back(mask);
    obj.push_back(relu_weighted_objective(w, w_hat, lambda));
    mse.push_back(analytic_relu_mse(w, w_hat, lambda, hc));
  }
  PruneVerdict v;
  v.objective_min = *std::min_element(obj.begin(), obj.end());
  v.mse_min = *std::min_element(mse.begin(), mse.end());
  std::size_t first_obj = masks.size();
  for (std::size_t s = 0; s < masks.size(); ++s) {
    if (within_tie(obj[s], v.objective_min, tol)) {
      v.objective_argmin.push_back(masks[s]);
      if (first_obj == masks.size() || obj[s] < obj[first_obj]) first_obj = s;
    }
    if (within_tie(mse[s], v.mse_min, tol)) v.mse_argmin.push_back(masks[s]);
  }
  v.mse_at_objective_argmin = mse[first_obj];
  v.gap = v.mse_at_objective_argmin - v.mse_min;
  v.agree = v.objective_argmin == v.mse_argmin;
  return v;
}

struct QuantVerdict {
  std::vector<int> objective_assignment;  // canonical labels of the objective argmin
  std::vector<int> mse_assignment;        // canonical labels of the MSE argmin
  VectorXd objective_centroids;           // weighted means for the objective argmin
  VectorXd mse_centroids;                 // MSE-optimal centroids for the objective argmin
  double objective_min = 0;
  double mse_min = 0;                     // over all assignments, centroids optimized for MSE
  double mse_at_objective_argmin = 0;     // objective argmin assignment, centroids optimized for MSE
  double mse_with_objective_centroids = 0;
  bool agree = false;  // the objective argmin assignment attains the minimum MSE within tol
  double gap = 0;
  long assignments = 0;
};

namespace detail {

// Calls f(labels) for every labelling of m items with at most k labels in
// canonical form (first occurrences appear in increasing order), so that
// relabelled duplicates are visited once.
template <typename F>
void for_each_canonical_assignment(int m, int k, F&& f) {
  std::vector<int> a(std::size_t(m), 0);
  auto rec = [&](auto&& self, int i, int used) -> void {
    if (i == m) {
      f(a);
      return;
    }
    for (int j = 0; j <= std::min(used, k - 1); ++j) {
      a[std::size_t(i)] = j;
      self(self, i + 1, std::max(used, j + 1));
    }
  };
  rec(rec, 0, 0);
}

inline VectorXd expand(const VectorXd& c, const std::vector<int>& a) {
  VectorXd out(Index(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) out[Index(i)] = c[a[i]];
  return out;
}

// Coordinate descent over the centroids with Brent line searches.
inline double minimize_mse_over_centroids(const VectorXd& w, const VectorXd& lambda, const std::vector<int>& a,
                                          VectorXd& c, const HermiteCoeffs& hc) {
  const double span = std::max(1.0, w.cwiseAbs().maxCoeff()) * 4.0;
  double best = analytic_relu_mse(w, expand(c, a), lambda, hc);
  for (int sweep = 0; sweep < 500; ++sweep) {
    const double before = best;
    for (Index j = 0; j < c.size(); ++j) {
      auto f = [&](double x) {
        VectorXd cc = c;
        cc[j] = x;
        return analytic_relu_mse(w, expand(cc, a), lambda, hc);
      };
      const auto r = boost::math::tools::brent_find_minima(f, c[j] - span, c[j] + span, 40);
      if (r.second < best) {
        best = r.second;
        c[j] = r.first;
      }
    }
    if (before - best <= 1e-16 * std::max(1.0, before)) break;
  }
  return best;
}

}  // namespace detail

/// Enumerates every assignment of m weights to at most k clusters. For each,
/// the objective-optimal centroids are the lambda-weighted means and the
/// MSE-optimal centroids are found numerically.
inline QuantVerdict verify_quant_optimality(const VectorXd& w, const VectorXd& lambda, int k, const HermiteCoeffs& hc,
                                            double tol = 1e-9) {
  const int m = int(w.size());
  require_domain(m >= 1 && m <= 8 && k >= 1 && k <= 3, "quantization enumeration supports m <= 8, k <= 3");
  require_shape(lambda.size() == w.size(), "lambda length differs from w");
  QuantVerdict v;
  v.objective_min = std::numeric_limits<double>::infinity();
  v.mse_min = std::numeric_limits<double>::infinity();
  struct Row {
    std::vector<int> a;
    double obj;
    double mse;
    VectorXd c_obj, c_mse;
  };
  std::vector<Row> rows;
  detail::for_each_canonical_assignment(m, k, [&](const std::vector<int>& a) {
    const int used = *std::max_element(a.begin(), a.end()) + 1;
    VectorXd num = VectorXd::Zero(used), den = VectorXd::Zero(used);
    for (int i = 0; i < m; ++i) {
      num[a[std::size_t(i)]] += lambda[i] * w[i];
      den[a[std::size_t(i)]] += lambda[i];
    }
    VectorXd c = num.cwiseQuotient(den);
    const double obj = relu_weighted_objective(w, detail::expand(c, a), lambda);
    VectorXd c_mse = c;
    const double mse = detail::minimize_mse_over_centroids(w, lambda, a, c_mse, hc);
    rows.push_back({a, obj, mse, c, c_mse});
  });
  v.assignments = long(rows.size());
  std::size_t obj_best = 0, mse_best = 0;
  for (std::size_t s = 0; s < rows.size(); ++s) {
    if (rows[s].obj < rows[obj_best].obj) obj_best = s;
    if (rows[s].mse < rows[mse_best].mse) mse_best = s;
  }
  v.objective_min = rows[obj_best].obj;
  v.mse_min = rows[mse_best].mse;
  // Among objective co-minimizers, report the one with the lowest MSE.
  std::size_t pick = obj_best;
  for (std::size_t s = 0; s < rows.size(); ++s)
    if (within_tie(rows[s].obj, v.objective_min, tol) && rows[s].mse < rows[pick].mse) pick = s;
  v.objective_assignment = rows[pick].a;
  v.mse_assignment = rows[mse_best].a;
  v.objective_centroids = rows[pick].c_obj;
  v.mse_centroids = rows[pick].c_mse;
  v.mse_at_objective_argmin = rows[pick].mse;
  v.mse_with_objective_centroids = analytic_relu_mse(w, detail::expand(rows[pick].c_obj, rows[pick].a), lambda, hc);
  v.gap = v.mse_at_objective_argmin - v.mse_min;
  v.agree = within_tie(v.mse_at_objective_argmin, v.mse_min, tol);
  return v;
}

}  // namespace rdc
