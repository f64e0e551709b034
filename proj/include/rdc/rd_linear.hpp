#pragma once

#include <rdc/rng.hpp>
#include <rdc/types.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

namespace rdc {

template <typename Scalar>
Scalar nats_to_bits(Scalar nats) {
  return nats / std::numbers::ln2_v<Scalar>;
}

/// R(D) of a scalar Gaussian source under squared error, in bits.
template <typename Scalar>
Scalar scalar_gaussian_rd(Scalar sigma2, Scalar distortion) {
  require_domain(sigma2 > Scalar(0) && distortion > Scalar(0), "variance and distortion must be positive");
  if (distortion >= sigma2) return Scalar(0);
  return Scalar(0.5) * std::log2(sigma2 / distortion);
}

/// Gaussian weight prior with diagonal covariance, and diagonal input second
/// moments, for the linear model f_w(x) = w^T x.
template <typename Scalar>
struct LinearSource {
  Vec<Scalar> sigma_w;   // E[W_i^2]
  Vec<Scalar> lambda_x;  // E[X_i^2]

  LinearSource(Vec<Scalar> weight_var, Vec<Scalar> input_moment)
      : sigma_w(std::move(weight_var)), lambda_x(std::move(input_moment)) {
    require_shape(sigma_w.size() == lambda_x.size() && sigma_w.size() > 0,
                  "prior and input moments need the same nonzero length");
    require_domain(all_finite(sigma_w) && all_finite(lambda_x), "source parameters must be finite");
    require_domain((sigma_w.array() > Scalar(0)).all() && (lambda_x.array() > Scalar(0)).all(),
                   "source parameters must be strictly positive");
  }

  /// Rejects a full covariance unless it is diagonal.
  static LinearSource from_covariances(const Mat<Scalar>& sigma_w_cov, const Mat<Scalar>& sigma_x_cov) {
    auto is_diag = [](const Mat<Scalar>& m) {
      return m.rows() == m.cols() && (m - Mat<Scalar>(m.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == Scalar(0);
    };
    require_domain(is_diag(sigma_w_cov) && is_diag(sigma_x_cov), "only diagonal covariances are supported");
    return LinearSource(sigma_w_cov.diagonal(), sigma_x_cov.diagonal());
  }

  Index size() const { return sigma_w.size(); }
  /// Distortion at which every coordinate is fully discarded.
  Scalar max_distortion() const { return lambda_x.dot(sigma_w); }
  /// Water volume at which coordinate i becomes full.
  Vec<Scalar> capacities() const { return lambda_x.cwiseProduct(sigma_w); }
};

template <typename Scalar>
struct WaterFillSolution {
  Scalar mu = Scalar(0);
  Vec<Scalar> levels;  // D_i
  Scalar target_distortion = Scalar(0);
  Scalar rate_nats = Scalar(0);

  Scalar rate_bits() const { return nats_to_bits(rate_nats); }
};

namespace detail {

template <typename Scalar>
Scalar water_volume(const Vec<Scalar>& capacities, Scalar mu) {
  return capacities.cwiseMin(mu).sum();
}

template <typename Scalar>
Vec<Scalar> water_levels(const LinearSource<Scalar>& src, Scalar mu) {
  Vec<Scalar> d(src.size());
  for (Index i = 0; i < src.size(); ++i) {
    d[i] = mu < src.lambda_x[i] * src.sigma_w[i] ? mu / src.lambda_x[i] : src.sigma_w[i];
  }
  return d;
}

}  // namespace detail

/// Weighted water-filling: find mu with sum_i lambda_i min(mu/lambda_i, E[W_i^2]) = D.
template <typename Scalar>
WaterFillSolution<Scalar> waterfill(const LinearSource<Scalar>& src, Scalar distortion) {
  const Scalar dmax = src.max_distortion();
  if (!(distortion > Scalar(0) && distortion <= dmax)) {
    std::ostringstream msg;
    msg << "distortion " << double(distortion) << " must lie in (0, " << double(dmax) << "]";
    throw DomainError(msg.str());
  }
  const Vec<Scalar> cap = src.capacities();
  Scalar lo = 0;
  Scalar hi = cap.maxCoeff();
  if (distortion < dmax) {
    // g(mu) is continuous, piecewise linear and strictly increasing below max capacity.
    for (int it = 0; it < 2000; ++it) {
      const Scalar mid = lo + (hi - lo) / 2;
      if (mid <= lo || mid >= hi) break;
      if (detail::water_volume(cap, mid) < distortion)
        lo = mid;
      else
        hi = mid;
      if (hi - lo <= Scalar(1e-15) * hi) break;
    }
    // The bracket pins the active segment; solve the linear piece exactly.
    const Scalar mu_probe = lo + (hi - lo) / 2;
    Scalar full = 0;
    Index active = 0;
    for (Index i = 0; i < cap.size(); ++i) {
      if (cap[i] <= mu_probe)
        full += cap[i];
      else
        ++active;
    }
    Scalar mu = active > 0 ? (distortion - full) / Scalar(active) : mu_probe;
    if (!(mu >= lo && mu <= hi)) mu = mu_probe;
    lo = hi = mu;
  }
  WaterFillSolution<Scalar> sol;
  sol.mu = hi;
  sol.levels = detail::water_levels(src, sol.mu);
  sol.target_distortion = distortion;
  Scalar rate = 0;
  for (Index i = 0; i < src.size(); ++i) {
    if (sol.levels[i] < src.sigma_w[i]) rate += Scalar(0.5) * std::log(src.sigma_w[i] / sol.levels[i]);
  }
  sol.rate_nats = rate;
  return sol;
}

template <typename Scalar>
struct RdPoint {
  Scalar distortion;
  Scalar rate_nats;
  Scalar mu;
  Vec<Scalar> levels;
};

template <typename Scalar>
std::vector<RdPoint<Scalar>> rd_curve(const LinearSource<Scalar>& src, const std::vector<Scalar>& grid) {
  std::vector<RdPoint<Scalar>> out;
  out.reserve(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (k > 0) require_domain(grid[k] > grid[k - 1], "distortion grid must be strictly ascending");
    const auto sol = waterfill(src, grid[k]);
    out.push_back({grid[k], sol.rate_nats, sol.mu, sol.levels});
  }
  return out;
}

/// Evenly spaced grid on (0, D_max].
template <typename Scalar>
std::vector<Scalar> uniform_distortion_grid(const LinearSource<Scalar>& src, int points) {
  require_domain(points >= 1, "grid needs at least one point");
  const Scalar dmax = src.max_distortion();
  std::vector<Scalar> g(static_cast<std::size_t>(points));
  for (int k = 0; k + 1 < points; ++k) g[std::size_t(k)] = dmax * Scalar(k + 1) / Scalar(points);
  g.back() = dmax;
  return g;
}

/// Per-coordinate conditional law of the compressor: W'_i | W_i = w_i is
/// Gaussian with these parameters; full coordinates map to 0.
template <typename Scalar>
struct CompressorLaw {
  Vec<Scalar> gain;      // conditional mean = gain_i * w_i
  Vec<Scalar> variance;  // conditional variance
  std::vector<bool> full;
};

template <typename Scalar>
CompressorLaw<Scalar> compressor_law(const LinearSource<Scalar>& src, const WaterFillSolution<Scalar>& sol) {
  CompressorLaw<Scalar> law{Vec<Scalar>::Zero(src.size()), Vec<Scalar>::Zero(src.size()),
                            std::vector<bool>(std::size_t(src.size()), false)};
  for (Index i = 0; i < src.size(); ++i) {
    const Scalar s2 = src.sigma_w[i];
    if (sol.mu >= src.lambda_x[i] * s2) {
      law.full[std::size_t(i)] = true;
      continue;
    }
    const Scalar d = sol.levels[i];
    law.gain[i] = (s2 - d) / s2;
    law.variance[i] = d * (s2 - d) / s2;
  }
  return law;
}

/// One draw of the rate-achieving compressor for realized weights `w`.
template <typename Scalar>
Vec<Scalar> optimal_linear_compressor(const LinearSource<Scalar>& src, Scalar distortion, const Vec<Scalar>& w,
                                      Engine& rng) {
  require_shape(w.size() == src.size(), "weight vector length differs from source dimension");
  const auto law = compressor_law(src, waterfill(src, distortion));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec<Scalar> out(w.size());
  for (Index i = 0; i < w.size(); ++i) {
    if (law.full[std::size_t(i)]) {
      out[i] = Scalar(0);
    } else {
      out[i] = law.gain[i] * w[i] + std::sqrt(law.variance[i]) * Scalar(normal(rng));
    }
  }
  return out;
}

template <typename Scalar>
Vec<Scalar> optimal_linear_compressor(const LinearSource<Scalar>& src, Scalar distortion, const Vec<Scalar>& w,
                                      std::uint64_t seed) {
  auto rng = make_engine(seed, stream::kLinearCompressor);
  return optimal_linear_compressor(src, distortion, w, rng);
}

struct CoordinateStats {
  bool full = false;
  double level = 0;              // D_i
  double mean_sq_error = 0;      // mean (W_i - W'_i)^2
  double var_hat = 0;            // empirical Var(W'_i)
  double var_hat_expected = 0;   // E[W_i^2] - D_i (0 when full)
  double cov_hat_err = 0;        // empirical Cov(W'_i, W_i - W'_i)
  double cov_hat_err_se = 0;     // its standard error
  bool identically_zero = false; // W'_i == 0 in every sample
};

struct AchievabilityReport {
  double target_distortion = 0;
  double empirical_distortion = 0;  // sum_i lambda_i mean (W_i - W'_i)^2
  double empirical_distortion_se = 0;
  double analytic_mi_nats = 0;
  double waterfill_rate_nats = 0;
  double mu = 0;
  long n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<CoordinateStats> coords;
};

/// Monte Carlo check of the compressor: W ~ N(0, diag sigma_w), one
/// compressor draw per sample.
inline AchievabilityReport achievability_report(const LinearSource<double>& src, double distortion, long n_samples,
                                                std::uint64_t seed) {
  require_domain(n_samples >= 10000, "achievability report needs at least 1e4 samples");
  const auto sol = waterfill(src, distortion);
  const auto law = compressor_law(src, sol);
  const Index m = src.size();
  auto rng = make_engine(seed, stream::kAchievability);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Running sums per coordinate.
  VectorXd sum_err2 = VectorXd::Zero(m), sum_hat = VectorXd::Zero(m), sum_hat2 = VectorXd::Zero(m);
  VectorXd sum_err = VectorXd::Zero(m), sum_prod = VectorXd::Zero(m), sum_prod2 = VectorXd::Zero(m);
  std::vector<bool> all_zero(std::size_t(m), true);
  double sum_dist = 0, sum_dist2 = 0;
  for (long s = 0; s < n_samples; ++s) {
    double dist = 0;
    for (Index i = 0; i < m; ++i) {
      const double w = std::sqrt(src.sigma_w[i]) * normal(rng);
      double hat = 0;
      if (!law.full[std::size_t(i)]) hat = law.gain[i] * w + std::sqrt(law.variance[i]) * normal(rng);
      const double err = w - hat;
      if (hat != 0) all_zero[std::size_t(i)] = false;
      sum_err2[i] += err * err;
      sum_hat[i] += hat;
      sum_hat2[i] += hat * hat;
      sum_err[i] += err;
      sum_prod[i] += hat * err;
      sum_prod2[i] += (hat * err) * (hat * err);
      dist += src.lambda_x[i] * err * err;
    }
    sum_dist += dist;
    sum_dist2 += dist * dist;
  }
  const double n = double(n_samples);
  AchievabilityReport rep;
  rep.target_distortion = distortion;
  rep.n_samples = n_samples;
  rep.seed = seed;
  rep.mu = sol.mu;
  rep.waterfill_rate_nats = sol.rate_nats;
  rep.empirical_distortion = sum_dist / n;
  rep.empirical_distortion_se = std::sqrt(std::max(0.0, sum_dist2 / n - rep.empirical_distortion * rep.empirical_distortion) / n);
  double mi = 0;
  for (Index i = 0; i < m; ++i) {
    CoordinateStats c;
    c.full = law.full[std::size_t(i)];
    c.level = sol.levels[i];
    c.mean_sq_error = sum_err2[i] / n;
    const double mh = sum_hat[i] / n, me = sum_err[i] / n;
    c.var_hat = sum_hat2[i] / n - mh * mh;
    c.var_hat_expected = c.full ? 0.0 : src.sigma_w[i] - sol.levels[i];
    c.cov_hat_err = sum_prod[i] / n - mh * me;
    // Standard error of the product mean; the centring correction is O(1/n).
    const double mp = sum_prod[i] / n;
    c.cov_hat_err_se = std::sqrt(std::max(0.0, sum_prod2[i] / n - mp * mp) / n);
    c.identically_zero = all_zero[std::size_t(i)];
    if (!c.full) mi += 0.5 * std::log(src.sigma_w[i] / sol.levels[i]);
    rep.coords.push_back(c);
  }
  rep.analytic_mi_nats = mi;
  return rep;
}

}  // namespace rdc
