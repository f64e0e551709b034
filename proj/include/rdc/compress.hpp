#pragma once

#include <rdc/importance.hpp>
#include <rdc/rng.hpp>
#include <rdc/types.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace rdc {

// ---------------------------------------------------------------------------
// Objective

/// sum_i I_i (w_i - w'_i)^2 + H_i (w_i - w'_i)^4.
template <typename Scalar>
Scalar objective_value(const Vec<Scalar>& w, const Vec<Scalar>& w_hat, const ImportanceDiag<Scalar>& imp) {
  require_shape(w.size() == w_hat.size() && w.size() == imp.size(), "objective operands differ in length");
  const auto d2 = (w - w_hat).array().square();
  Scalar v = (imp.quadratic.array() * d2).sum();
  if (imp.quartic) v += (imp.quartic->array() * d2.square()).sum();
  return v;
}

/// sum_i I_i w'_i (w_i - w'_i); zero when the first golden rule holds.
template <typename Scalar>
Scalar orthogonality_residual(const Vec<Scalar>& w, const Vec<Scalar>& w_hat, const Vec<Scalar>& importance) {
  require_shape(w.size() == w_hat.size() && w.size() == importance.size(), "operands differ in length");
  return (importance.array() * w_hat.array() * (w - w_hat).array()).sum();
}

// ---------------------------------------------------------------------------
// Pruning

struct PruneMask {
  std::vector<bool> keep;

  Index size() const { return Index(keep.size()); }
  Index kept() const { return Index(std::count(keep.begin(), keep.end(), true)); }
  double ratio() const { return keep.empty() ? 1.0 : double(kept()) / double(keep.size()); }
};

/// Number of weights kept at ratio r: round(r m), halves away from zero.
inline Index kept_count(double r, Index m) {
  require_domain(r >= 0.0 && r <= 1.0, "keep ratio must lie in [0, 1]");
  return std::min<Index>(m, Index(std::round(r * double(m))));
}

template <typename Scalar>
Vec<Scalar> prune_scores(const Vec<Scalar>& w, const ImportanceDiag<Scalar>& imp) {
  require_shape(w.size() == imp.size(), "weights and importances differ in length");
  const auto w2 = w.array().square();
  Vec<Scalar> s = imp.quadratic.array() * w2;
  if (imp.quartic) s.array() += imp.quartic->array() * w2.square();
  return s;
}

template <typename Scalar>
PruneMask prune_mask_for_count(const Vec<Scalar>& w, const ImportanceDiag<Scalar>& imp, Index keep) {
  const Vec<Scalar> s = prune_scores(w, imp);
  const Index m = w.size();
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return s[a] < s[b]; });
  PruneMask mask{std::vector<bool>(std::size_t(m), true)};
  for (Index k = 0; k < m - keep; ++k) mask.keep[std::size_t(order[std::size_t(k)])] = false;
  return mask;
}

template <typename Scalar>
Vec<Scalar> apply_mask(const Vec<Scalar>& w, const PruneMask& mask) {
  require_shape(mask.size() == w.size(), "mask length differs from weights");
  Vec<Scalar> out = w;
  for (Index i = 0; i < w.size(); ++i)
    if (!mask.keep[std::size_t(i)]) out[i] = Scalar(0);
  return out;
}

template <typename Scalar>
struct PruneResult {
  PruneMask mask;
  Vec<Scalar> weights;
};

/// Greedy pruning: zero the m - round(r m) weights with the smallest
/// I_i w_i^2 + H_i w_i^4; equal scores prune the lower index first.
template <typename Scalar>
PruneResult<Scalar> prune(const Vec<Scalar>& w, const ImportanceDiag<Scalar>& imp, double r) {
  auto mask = prune_mask_for_count(w, imp, kept_count(r, w.size()));
  auto out = apply_mask(w, mask);
  return {std::move(mask), std::move(out)};
}

inline double pruning_compression_ratio(const PruneMask& mask) { return mask.ratio(); }

// ---------------------------------------------------------------------------
// Cubic root

template <typename Scalar>
Scalar cubic_discriminant0(Scalar a, Scalar b, Scalar c) {
  return b * b - Scalar(3) * a * c;
}

namespace detail {

// Root of a nondecreasing cubic (a > 0, b^2 - 3ac <= 0): Newton from the
// inflection point, kept inside a sign-change bracket, bisecting whenever a
// Newton step leaves it.
template <typename Scalar>
Scalar monotone_cubic_root(Scalar a, Scalar b, Scalar c, Scalar d, Scalar tol) {
  auto f = [&](Scalar x) { return ((a * x + b) * x + c) * x + d; };
  auto df = [&](Scalar x) { return (Scalar(3) * a * x + Scalar(2) * b) * x + c; };
  Scalar x = -b / (Scalar(3) * a);
  Scalar fx = f(x);
  if (fx == Scalar(0)) return x;
  Scalar lo = x, hi = x;
  Scalar step = std::max(Scalar(1), std::abs(x));
  if (fx < Scalar(0)) {
    for (hi = x + step; f(hi) < Scalar(0); hi = x + step) step *= 2;
  } else {
    for (lo = x - step; f(lo) > Scalar(0); lo = x - step) step *= 2;
  }
  x = lo + (hi - lo) / 2;
  for (int it = 0; it < 400; ++it) {
    fx = f(x);
    if (fx == Scalar(0)) return x;
    if (fx < Scalar(0))
      lo = x;
    else
      hi = x;
    const Scalar slope = df(x);
    Scalar next = slope > Scalar(0) ? x - fx / slope : lo + (hi - lo) / 2;
    if (!(next > lo && next < hi)) next = lo + (hi - lo) / 2;
    const Scalar eps = std::max(tol, Scalar(4) * std::numeric_limits<Scalar>::epsilon() * std::abs(next));
    if (std::abs(next - x) <= eps || hi - lo <= eps) return next;
    x = next;
  }
  return x;
}

}  // namespace detail

/// Unique real root of a x^3 + b x^2 + c x + d with a > 0 and b^2 - 3ac < 0.
template <typename Scalar>
Scalar cubic_real_root(Scalar a, Scalar b, Scalar c, Scalar d, Scalar tol = Scalar(1e-12)) {
  require_domain(a > Scalar(0), "cubic_real_root needs a positive leading coefficient");
  require_domain(cubic_discriminant0(a, b, c) < Scalar(0), "cubic_real_root needs b^2 - 3ac < 0");
  return detail::monotone_cubic_root(a, b, c, d, tol);
}

// ---------------------------------------------------------------------------
// Quantization

struct KMeansOptions {
  Index k = 2;
  int iters = 100;
  std::uint64_t seed = 0;
  int restarts = 10;  // independent seedings; the lowest final objective wins
};

template <typename Scalar>
struct Codebook {
  Vec<Scalar> centroids;
  std::vector<Index> assignments;  // 0-based cluster per weight
  std::vector<Index> cluster_sizes;

  // Diagnostics: objective after each completed iteration of the kept run,
  // and b^2 - 3ac of every update-step cubic solved in any run.
  std::vector<Scalar> objective_trace;
  std::vector<Scalar> delta0_trace;
  int iterations = 0;

  Index k() const { return centroids.size(); }
};

template <typename Scalar>
Vec<Scalar> apply_codebook(const Vec<Scalar>& w, const Codebook<Scalar>& cb) {
  require_shape(Index(cb.assignments.size()) == w.size(), "assignment count differs from weight count");
  Vec<Scalar> out(w.size());
  for (Index i = 0; i < w.size(); ++i) {
    const Index a = cb.assignments[std::size_t(i)];
    require_domain(a >= 0 && a < cb.k(), "assignment out of range");
    out[i] = cb.centroids[a];
  }
  return out;
}

template <typename Scalar>
Index count_distinct(const Vec<Scalar>& w) {
  std::vector<Scalar> v(w.data(), w.data() + w.size());
  std::sort(v.begin(), v.end());
  return Index(std::unique(v.begin(), v.end()) - v.begin());
}

namespace detail {

template <typename Scalar>
Scalar point_cost(Scalar d, Scalar quad, Scalar quart) {
  const Scalar d2 = d * d;
  return quad * d2 + quart * d2 * d2;
}

template <typename Scalar>
struct ClusterInput {
  const Vec<Scalar>& w;
  const Vec<Scalar>& quad;
  const Vec<Scalar>* quart;  // null: quadratic-only objective
  Scalar quart_at(Index i) const { return quart ? (*quart)[i] : Scalar(0); }
};

// Importance-weighted k-means++ seeding: the next centroid is drawn with
// probability proportional to the weight's objective cost against its
// nearest chosen centroid.
template <typename Scalar>
Vec<Scalar> seed_centroids(const ClusterInput<Scalar>& in, Index k, Engine& rng) {
  const Index m = in.w.size();
  Vec<Scalar> c(k);
  std::vector<Scalar> cost(static_cast<std::size_t>(m));
  // First centroid: drawn proportional to importance (uniform if all zero).
  {
    std::vector<double> p(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) p[std::size_t(i)] = double(in.quad[i] + in.quart_at(i));
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    Index pick = 0;
    if (total > 0) {
      std::discrete_distribution<Index> dist(p.begin(), p.end());
      pick = dist(rng);
    } else {
      pick = std::uniform_int_distribution<Index>(0, m - 1)(rng);
    }
    c[0] = in.w[pick];
  }
  for (Index j = 1; j < k; ++j) {
    std::vector<double> p(static_cast<std::size_t>(m));
    Index farthest = 0;
    Scalar far_d = -1;
    for (Index i = 0; i < m; ++i) {
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (Index q = 0; q < j; ++q) best = std::min(best, std::abs(in.w[i] - c[q]));
      p[std::size_t(i)] = double(point_cost(best, in.quad[i], in.quart_at(i)));
      if (best > far_d) {
        far_d = best;
        farthest = i;
      }
    }
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (total > 0) {
      std::discrete_distribution<Index> dist(p.begin(), p.end());
      c[j] = in.w[dist(rng)];
    } else {
      // Remaining weight sits on zero-importance points; take the farthest distinct value.
      c[j] = in.w[farthest];
    }
  }
  return c;
}

template <typename Scalar>
void assign_nearest(const Vec<Scalar>& w, const Vec<Scalar>& c, std::vector<Index>& a) {
  for (Index i = 0; i < w.size(); ++i) {
    Index best = 0;
    Scalar bd = std::abs(w[i] - c[0]);
    for (Index j = 1; j < c.size(); ++j) {
      const Scalar d = std::abs(w[i] - c[j]);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    a[std::size_t(i)] = best;
  }
}

template <typename Scalar>
Scalar codebook_objective(const ClusterInput<Scalar>& in, const Vec<Scalar>& c, const std::vector<Index>& a) {
  Scalar v = 0;
  for (Index i = 0; i < in.w.size(); ++i)
    v += point_cost(in.w[i] - c[a[std::size_t(i)]], in.quad[i], in.quart_at(i));
  return v;
}

// Moves each empty centroid onto the weight with the largest cost against
// its current centroid, then reassigns that weight.
template <typename Scalar>
void reseed_empty(const ClusterInput<Scalar>& in, Vec<Scalar>& c, std::vector<Index>& a) {
  const Index k = c.size();
  std::vector<Index> sizes(std::size_t(k), 0);
  for (Index ai : a) ++sizes[std::size_t(ai)];
  for (Index j = 0; j < k; ++j) {
    if (sizes[std::size_t(j)] > 0) continue;
    Index pick = -1;
    Scalar best_cost = -1, best_dist = -1;
    for (Index i = 0; i < in.w.size(); ++i) {
      const Index from = a[std::size_t(i)];
      if (sizes[std::size_t(from)] < 2) continue;
      const Scalar d = std::abs(in.w[i] - c[from]);
      const Scalar cost = point_cost(d, in.quad[i], in.quart_at(i));
      if (cost > best_cost || (cost == best_cost && d > best_dist)) {
        best_cost = cost;
        best_dist = d;
        pick = i;
      }
    }
    if (pick < 0) continue;
    --sizes[std::size_t(a[std::size_t(pick)])];
    c[j] = in.w[pick];
    a[std::size_t(pick)] = j;
    sizes[std::size_t(j)] = 1;
  }
}

// Per-cluster centroid for the quadratic objective: importance-weighted mean,
// unweighted mean when the cluster carries no importance.
template <typename Scalar>
Scalar weighted_mean(const ClusterInput<Scalar>& in, const std::vector<Index>& members) {
  Scalar num = 0, den = 0;
  for (Index i : members) {
    num += in.quad[i] * in.w[i];
    den += in.quad[i];
  }
  if (den > Scalar(0)) return num / den;
  Scalar s = 0;
  for (Index i : members) s += in.w[i];
  return s / Scalar(members.size());
}

template <typename Scalar>
bool all_equal(const ClusterInput<Scalar>& in, const std::vector<Index>& members) {
  for (Index i : members)
    if (in.w[i] != in.w[members.front()]) return false;
  return true;
}

template <typename Scalar>
struct CentroidUpdate {
  Scalar centroid;
  bool solved_cubic = false;
  Scalar delta0 = 0;
};

// Minimizes sum I_i (w_i - x)^2 + H_i (w_i - x)^4 over x. The stationarity
// condition is the cubic
//   (sum 4H) x^3 - (sum 12 H w) x^2 + (sum 12 H w^2 + 2I) x - (sum 4 H w^3 + 2 I w) = 0.
template <typename Scalar>
CentroidUpdate<Scalar> quartic_centroid(const ClusterInput<Scalar>& in, const std::vector<Index>& members) {
  Scalar sh = 0, si = 0;
  for (Index i : members) {
    sh += in.quart_at(i);
    si += in.quad[i];
  }
  if (sh == Scalar(0)) return {weighted_mean(in, members), false, 0};
  Scalar a = 0, b = 0, c = 0, d = 0, shw = 0;
  for (Index i : members) {
    const Scalar h = in.quart_at(i), q = in.quad[i], w = in.w[i];
    a += 4 * h;
    b -= 12 * h * w;
    c += 12 * h * w * w + 2 * q;
    d -= 4 * h * w * w * w + 2 * q * w;
    shw += h * w;
  }
  // b^2 - 3ac = -144 (sum H)(sum H (w - wbar)^2) - 24 (sum H)(sum I), with
  // wbar the H-weighted mean; this form is exactly nonpositive in floating point.
  const Scalar wbar = shw / sh;
  Scalar spread = 0;
  for (Index i : members) spread += in.quart_at(i) * (in.w[i] - wbar) * (in.w[i] - wbar);
  const Scalar delta0 = -144 * sh * spread - 24 * sh * si;
  if (si > Scalar(0) && !(delta0 < Scalar(0)))
    throw NumericError("quartic k-means produced a cubic with nonnegative b^2 - 3ac");
  return {monotone_cubic_root(a, b, c, d, Scalar(1e-14)), true, delta0};
}

template <typename Scalar>
Codebook<Scalar> lloyd_run(const ClusterInput<Scalar>& in, const KMeansOptions& opt, Engine& rng) {
  const Index m = in.w.size();
  Codebook<Scalar> cb;
  std::vector<Index> a(std::size_t(m), 0);
  Vec<Scalar> c = seed_centroids(in, opt.k, rng);
  std::vector<Index> prev;
  for (int t = 1; t <= opt.iters; ++t) {
    assign_nearest(in.w, c, a);
    reseed_empty(in, c, a);
    if (!prev.empty() && a == prev) break;
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(opt.k));
    for (Index i = 0; i < m; ++i) members[std::size_t(a[std::size_t(i)])].push_back(i);
    for (Index j = 0; j < opt.k; ++j) {
      const auto& mem = members[std::size_t(j)];
      if (mem.empty()) continue;
      if (all_equal(in, mem)) {
        c[j] = in.w[mem.front()];
        continue;
      }
      if (in.quart) {
        const auto up = quartic_centroid(in, mem);
        c[j] = up.centroid;
        if (up.solved_cubic) cb.delta0_trace.push_back(up.delta0);
      } else {
        c[j] = weighted_mean(in, mem);
      }
    }
    cb.objective_trace.push_back(codebook_objective(in, c, a));
    cb.iterations = t;
    prev = a;
  }
  cb.centroids = c;
  cb.assignments = a;
  return cb;
}

template <typename Scalar>
Codebook<Scalar> lloyd(const ClusterInput<Scalar>& in, const KMeansOptions& opt) {
  const Index m = in.w.size();
  require_domain(opt.k >= 1, "k must be at least 1");
  require_domain(opt.iters >= 1, "iteration count must be at least 1");
  require_domain(opt.restarts >= 1, "restart count must be at least 1");
  require_shape(in.quad.size() == m && (!in.quart || in.quart->size() == m), "importance length differs from weights");
  const Index distinct = count_distinct(in.w);
  require_domain(opt.k <= distinct, "k exceeds the number of distinct weights");

  Codebook<Scalar> cb;
  if (opt.k == distinct) {
    // Every distinct value is its own centroid: zero objective, exact weights.
    std::vector<Scalar> v(in.w.data(), in.w.data() + m);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    cb.centroids = Eigen::Map<Vec<Scalar>>(v.data(), Index(v.size()));
    cb.assignments.assign(std::size_t(m), 0);
    assign_nearest(in.w, cb.centroids, cb.assignments);
    cb.objective_trace.push_back(codebook_objective(in, cb.centroids, cb.assignments));
  } else {
    std::vector<Scalar> delta0;
    for (int r = 0; r < opt.restarts; ++r) {
      auto rng = make_engine(opt.seed, stream::kKMeansInit, std::uint64_t(r));
      auto run = lloyd_run(in, opt, rng);
      delta0.insert(delta0.end(), run.delta0_trace.begin(), run.delta0_trace.end());
      if (r == 0 || run.objective_trace.back() < cb.objective_trace.back()) cb = std::move(run);
    }
    cb.delta0_trace = std::move(delta0);
  }
  cb.cluster_sizes.assign(std::size_t(opt.k), 0);
  for (Index ai : cb.assignments) ++cb.cluster_sizes[std::size_t(ai)];
  return cb;
}

}  // namespace detail

/// Lloyd iterations on sum_i I_i (w_i - c_{A_i})^2.
template <typename Scalar>
Codebook<Scalar> weighted_kmeans(const Vec<Scalar>& w, const Vec<Scalar>& importance, const KMeansOptions& opt) {
  require_shape(importance.size() == w.size(), "importance length differs from weights");
  if ((importance.array() < Scalar(0)).any()) throw DomainError("importances must be nonnegative");
  return detail::lloyd(detail::ClusterInput<Scalar>{w, importance, nullptr}, opt);
}

/// Lloyd iterations on sum_i I_i (w_i - c_{A_i})^2 + H_i (w_i - c_{A_i})^4,
/// centroids from the unique real root of the stationarity cubic.
template <typename Scalar>
Codebook<Scalar> quartic_weighted_kmeans(const Vec<Scalar>& w, const Vec<Scalar>& quad, const Vec<Scalar>& quart,
                                         const KMeansOptions& opt) {
  require_shape(quad.size() == w.size() && quart.size() == w.size(), "importance length differs from weights");
  if ((quad.array() < Scalar(0)).any() || (quart.array() < Scalar(0)).any())
    throw DomainError("importances must be nonnegative");
  return detail::lloyd(detail::ClusterInput<Scalar>{w, quad, &quart}, opt);
}

template <typename Scalar>
Codebook<Scalar> quantize(const Vec<Scalar>& w, const ImportanceDiag<Scalar>& imp, const KMeansOptions& opt,
                          bool quartic) {
  if (quartic) {
    const Vec<Scalar> h = imp.quartic ? *imp.quartic : Vec<Scalar>::Zero(w.size());
    return quartic_weighted_kmeans(w, imp.quadratic, h, opt);
  }
  return weighted_kmeans(w, imp.quadratic, opt);
}

// ---------------------------------------------------------------------------
// Bit accounting

/// ceil(log2(m / mj)) for integers m >= mj >= 1, computed without floating point.
inline int ceil_log2_ratio(std::int64_t m, std::int64_t mj) {
  require_domain(mj >= 1 && m >= mj, "cluster size must lie in [1, m]");
  int e = 0;
  while ((mj << e) < m) ++e;
  return e;
}

/// Total bits of a quantized tensor: Huffman-style code lengths plus k
/// uncompressed codebook entries.
inline std::int64_t quantized_bits(std::int64_t m, int bits_per_weight, const std::vector<std::int64_t>& sizes,
                                   std::int64_t k) {
  std::int64_t total = 0, code = 0;
  for (auto mj : sizes) {
    require_domain(mj >= 0, "cluster sizes must be nonnegative");
    total += mj;
    if (mj > 0) code += mj * ceil_log2_ratio(m, mj);
  }
  require_domain(total == m, "cluster sizes do not sum to m");
  require_domain(k >= std::int64_t(sizes.size()) || sizes.empty(), "more cluster sizes than clusters");
  return code + k * bits_per_weight;
}

/// r = m b / (m sum_j (m_j/m) ceil(log2(m/m_j)) + k b).
inline double quantization_compression_ratio(std::int64_t m, int bits_per_weight,
                                             const std::vector<std::int64_t>& sizes, std::int64_t k) {
  require_domain(m >= 1 && bits_per_weight >= 1 && k >= 1, "m, b and k must be positive");
  return double(m * bits_per_weight) / double(quantized_bits(m, bits_per_weight, sizes, k));
}

}  // namespace rdc
