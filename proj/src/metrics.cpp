#include <rdc/metrics.hpp>
#include <rdc/rng.hpp>

#include <algorithm>
#include <cstdio>
#include <thread>

namespace rdc {

std::string to_string(CompressorKind k) {
  switch (k) {
    case CompressorKind::prune: return "prune";
    case CompressorKind::quant: return "quant";
    case CompressorKind::quant_quartic: return "quant-quartic";
  }
  return "?";
}

CompressorKind parse_compressor_kind(const std::string& s) {
  for (auto k : {CompressorKind::prune, CompressorKind::quant, CompressorKind::quant_quartic})
    if (to_string(k) == s) return k;
  throw UsageError("unknown compressor '" + s + "'");
}

namespace {

struct Segment {
  Index offset;
  Index length;
};

std::vector<Segment> segments_of(const FlatIndex& index, bool global_pool) {
  if (global_pool) return {{0, index.size()}};
  std::vector<Segment> segs;
  for (std::size_t l = 0; l < index.num_layers(); ++l) segs.push_back({index.layer_offset(l), index.layer_size(l)});
  return segs;
}

}  // namespace

CompressedModel compress_network(const Network<double>& net, const FlatIndex& index, const ImportanceDiag<double>& imp,
                                 const CompressOptions& opt) {
  require_shape(imp.size() == index.size(), "importance length differs from parameter count");
  const VectorXd w = flatten(net, index);
  VectorXd w_hat = w;
  CompressedModel out{net, w, 1.0, {}, {}, {}};
  std::int64_t total_bits = 0;
  Index kept_total = 0;
  const auto segs = segments_of(index, opt.global_pool);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto [off, len] = segs[s];
    if (len == 0) continue;
    const VectorXd ws = w.segment(off, len);
    const auto is = imp.segment(off, len);
    LayerBreakdown lb{s, len, len, 0, 0.0};
    if (opt.compressor == CompressorKind::prune) {
      auto res = prune(ws, is, opt.ratio);
      lb.kept = res.mask.kept();
      kept_total += lb.kept;
      w_hat.segment(off, len) = res.weights;
      lb.objective = objective_value(ws, res.weights, is);
      out.masks.push_back(std::move(res.mask));
    } else {
      KMeansOptions ko;
      ko.k = std::min<Index>(opt.k, count_distinct(ws));
      ko.iters = opt.iters;
      ko.restarts = opt.restarts;
      ko.seed = derive_seed(opt.seed, stream::kKMeansInit, s);
      auto cb = quantize(ws, is, ko, opt.compressor == CompressorKind::quant_quartic);
      const VectorXd q = apply_codebook(ws, cb);
      w_hat.segment(off, len) = q;
      lb.clusters = cb.k();
      lb.objective = objective_value(ws, q, is);
      std::vector<std::int64_t> sizes(cb.cluster_sizes.begin(), cb.cluster_sizes.end());
      total_bits += quantized_bits(len, opt.bits_per_weight, sizes, cb.k());
      out.codebooks.push_back(std::move(cb));
    }
    out.per_layer.push_back(lb);
  }
  if (opt.compressor == CompressorKind::prune) {
    out.ratio = index.size() > 0 ? double(kept_total) / double(index.size()) : 1.0;
  } else {
    out.ratio = double(index.size()) * opt.bits_per_weight / double(std::max<std::int64_t>(total_bits, 1));
  }
  out.weights = w_hat;
  out.net = unflatten(net, index, w_hat);
  return out;
}

ReportRow evaluate_row(const Network<double>& net, const Network<double>& net_hat, const Dataset<double>& data) {
  ReportRow row;
  row.mse = output_sq_distance(net, net_hat, data);
  if (net.head() == Head::classification) row.kl = distortion_kl(net, net_hat, data);
  if (data.has_labels()) {
    const VectorXd base = per_sample_losses(net, data);
    const VectorXd comp = per_sample_losses(net_hat, data);
    row.supervised_sq = (base - comp).squaredNorm() / double(data.size());
    row.loss_shift = (comp - base).mean();
    if (net.head() == Head::classification) {
      row.accuracy = accuracy(net_hat, data);
      row.cross_entropy = comp.mean();
    }
  }
  return row;
}

namespace {

struct Series {
  std::string name;
  ImportanceKind kind;
  double ridge;
};

std::string format_ridge(double r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", r);
  return buf;
}

}  // namespace

CompressionReport sweep(const Network<double>& net, const Dataset<double>& importance_data,
                        const Dataset<double>& eval_data, const SweepConfig& cfg) {
  if (cfg.grid.empty()) throw UsageError("sweep grid is empty");
  if (cfg.objectives.empty()) throw UsageError("sweep needs at least one objective");
  for (double g : cfg.grid) {
    if (cfg.compressor == CompressorKind::prune)
      require_domain(g >= 0.0 && g <= 1.0, "pruning ratios must lie in [0, 1]");
    else
      require_domain(g >= 1.0 && g == std::floor(g), "cluster counts must be positive integers");
  }
  const FlatIndex index(net, cfg.include_biases);

  std::vector<Series> series;
  for (auto kind : cfg.objectives) {
    const bool hess = kind == ImportanceKind::sup_hessian || kind == ImportanceKind::sup_grad_hessian;
    if (hess && !cfg.ridge_grid.empty()) {
      for (double r : cfg.ridge_grid) series.push_back({to_string(kind) + "[ridge=" + format_ridge(r) + "]", kind, r});
    } else {
      series.push_back({to_string(kind), kind, cfg.hessian_ridge});
    }
  }
  std::vector<ImportanceDiag<double>> imps;
  imps.reserve(series.size());
  for (const auto& s : series) imps.push_back(compute_importance(s.kind, net, importance_data, index, s.ridge));

  struct Job {
    std::size_t series;
    double param;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < series.size(); ++s)
    for (double g : cfg.grid) jobs.push_back({s, g});
  std::vector<ReportRow> rows(jobs.size());

  auto run = [&](std::size_t j) {
    const auto& job = jobs[j];
    CompressOptions opt;
    opt.compressor = cfg.compressor;
    opt.ratio = job.param;
    opt.k = Index(job.param);
    opt.iters = cfg.iters;
    opt.restarts = cfg.restarts;
    opt.seed = cfg.seed;
    opt.bits_per_weight = cfg.bits_per_weight;
    opt.global_pool = cfg.global_pool;
    const auto cm = compress_network(net, index, imps[job.series], opt);
    ReportRow row = evaluate_row(net, cm.net, eval_data);
    row.method = series[job.series].name;
    row.compressor = cfg.compressor;
    row.param = job.param;
    row.ratio = cm.ratio;
    row.per_layer = cm.per_layer;
    rows[j] = std::move(row);
  };

  const int threads = std::max(1, std::min<int>(cfg.threads, int(jobs.size())));
  if (threads == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run(j);
  } else {
    // Static round-robin partition; every job writes only its own slot.
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t j = std::size_t(t); j < jobs.size(); j += std::size_t(threads)) run(j);
        } catch (...) {
          errors[std::size_t(t)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Group by series (input order), ascending ratio within a group.
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (jobs[a].series != jobs[b].series) return jobs[a].series < jobs[b].series;
    return rows[a].ratio < rows[b].ratio;
  });
  CompressionReport rep;
  for (auto i : order) rep.rows.push_back(std::move(rows[i]));
  return rep;
}

}  // namespace rdc
