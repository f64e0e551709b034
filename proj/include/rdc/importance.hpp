#pragma once

#include <rdc/net.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rdc {

enum class ImportanceKind {
  baseline,
  unsup_regression,
  unsup_classification,
  sup_gradient,
  sup_hessian,
  sup_grad_hessian,
};

inline std::string to_string(ImportanceKind k) {
  switch (k) {
    case ImportanceKind::baseline: return "baseline";
    case ImportanceKind::unsup_regression: return "unsup-reg";
    case ImportanceKind::unsup_classification: return "unsup-cls";
    case ImportanceKind::sup_gradient: return "grad";
    case ImportanceKind::sup_hessian: return "hess";
    case ImportanceKind::sup_grad_hessian: return "grad-hess";
  }
  return "?";
}

inline ImportanceKind parse_importance_kind(std::string_view s) {
  for (auto k : {ImportanceKind::baseline, ImportanceKind::unsup_regression, ImportanceKind::unsup_classification,
                 ImportanceKind::sup_gradient, ImportanceKind::sup_hessian, ImportanceKind::sup_grad_hessian}) {
    if (to_string(k) == s) return k;
  }
  throw UsageError("unknown objective '" + std::string(s) + "'");
}

inline bool needs_labels(ImportanceKind k) {
  return k == ImportanceKind::sup_gradient || k == ImportanceKind::sup_hessian ||
         k == ImportanceKind::sup_grad_hessian;
}

/// Diagonal weight importances: the objective is
/// sum_i quadratic_i (w_i - w'_i)^2 + quartic_i (w_i - w'_i)^4.
template <typename Scalar>
struct ImportanceDiag {
  Vec<Scalar> quadratic;
  std::optional<Vec<Scalar>> quartic;
  ImportanceKind kind = ImportanceKind::baseline;
  Scalar hessian_ridge = Scalar(0);

  Index size() const { return quadratic.size(); }
  bool has_quartic() const { return quartic.has_value(); }

  ImportanceDiag segment(Index start, Index len) const {
    ImportanceDiag out{quadratic.segment(start, len), std::nullopt, kind, hessian_ridge};
    if (quartic) out.quartic = quartic->segment(start, len);
    return out;
  }
};

template <typename Scalar>
ImportanceDiag<Scalar> importance_baseline(Index m) {
  return {Vec<Scalar>::Ones(m), std::nullopt, ImportanceKind::baseline, Scalar(0)};
}

namespace detail {

template <typename Scalar>
void check_importance(const ImportanceDiag<Scalar>& imp) {
  if (!all_finite(imp.quadratic) || (imp.quartic && !all_finite(*imp.quartic)))
    throw NumericError("importance scores are not finite");
  if ((imp.quadratic.array() < Scalar(0)).any() || (imp.quartic && (imp.quartic->array() < Scalar(0)).any()))
    throw NumericError("importance scores must be nonnegative");
}

}  // namespace detail

/// Diagonal of E_X[J J^T] for a regression network, J the output Jacobian.
template <typename Scalar>
ImportanceDiag<Scalar> importance_unsup_regression(const Network<Scalar>& net, const Dataset<Scalar>& data,
                                                   const FlatIndex& index) {
  if (net.head() != Head::regression) throw UsageError("unsup-reg importance needs a regression network");
  check_dataset(net, data, false);
  Vec<Scalar> acc = Vec<Scalar>::Zero(index.size());
  for (Index s = 0; s < data.size(); ++s) {
    const Mat<Scalar> j = jacobian_outputs(net, Vec<Scalar>(data.inputs.row(s).transpose()), index);
    acc += j.array().square().colwise().sum().matrix().transpose();
  }
  ImportanceDiag<Scalar> imp{acc / Scalar(data.size()), std::nullopt, ImportanceKind::unsup_regression, Scalar(0)};
  detail::check_importance(imp);
  return imp;
}

/// Diagonal of E_X[J diag(1/f) J^T] for a classifier (KL distortion to second order).
template <typename Scalar>
ImportanceDiag<Scalar> importance_unsup_classification(const Network<Scalar>& net, const Dataset<Scalar>& data,
                                                       const FlatIndex& index) {
  if (net.head() != Head::classification) throw UsageError("unsup-cls importance needs a classification network");
  check_dataset(net, data, false);
  Vec<Scalar> acc = Vec<Scalar>::Zero(index.size());
  for (Index s = 0; s < data.size(); ++s) {
    const Vec<Scalar> x = data.inputs.row(s).transpose();
    const auto t = trace_forward(net, x);
    const Mat<Scalar> j = detail::pullback(net, t, index, detail::head_jacobian(net, t));
    const Vec<Scalar> inv_p = floor_probabilities(t.output).cwiseInverse();
    acc += (inv_p.asDiagonal() * j.array().square().matrix()).colwise().sum().transpose();
  }
  ImportanceDiag<Scalar> imp{acc / Scalar(data.size()), std::nullopt, ImportanceKind::unsup_classification,
                             Scalar(0)};
  detail::check_importance(imp);
  return imp;
}

/// Mean squared per-sample loss gradient.
template <typename Scalar>
ImportanceDiag<Scalar> importance_sup_gradient(const Network<Scalar>& net, const Dataset<Scalar>& data,
                                               const FlatIndex& index) {
  check_dataset(net, data, true);
  Vec<Scalar> acc = Vec<Scalar>::Zero(index.size());
  for (Index s = 0; s < data.size(); ++s) {
    const Vec<Scalar> g = grad_loss(net, Vec<Scalar>(data.inputs.row(s).transpose()), sample_target(data, s), index);
    acc += g.cwiseAbs2();
  }
  ImportanceDiag<Scalar> imp{acc / Scalar(data.size()), std::nullopt, ImportanceKind::sup_gradient, Scalar(0)};
  detail::check_importance(imp);
  return imp;
}

namespace detail {

// Per-sample Hessian diagonals reduced to their mean and mean square.
template <typename Scalar>
std::pair<Vec<Scalar>, Vec<Scalar>> hessian_moments(const Network<Scalar>& net, const Dataset<Scalar>& data,
                                                    const FlatIndex& index) {
  Vec<Scalar> mean = Vec<Scalar>::Zero(index.size());
  Vec<Scalar> mean_sq = Vec<Scalar>::Zero(index.size());
  for (Index s = 0; s < data.size(); ++s) {
    const Vec<Scalar> h =
        hessian_diag_loss(net, Vec<Scalar>(data.inputs.row(s).transpose()), sample_target(data, s), index);
    mean += h;
    mean_sq += h.cwiseAbs2();
  }
  return {mean / Scalar(data.size()), mean_sq / Scalar(data.size())};
}

}  // namespace detail

/// max(0, mean Hessian diagonal) + ridge.
template <typename Scalar>
ImportanceDiag<Scalar> importance_sup_hessian(const Network<Scalar>& net, const Dataset<Scalar>& data,
                                              const FlatIndex& index, Scalar ridge = Scalar(0)) {
  require_domain(ridge >= Scalar(0), "hessian ridge must be nonnegative");
  check_dataset(net, data, true);
  const auto [mean, mean_sq] = detail::hessian_moments(net, data, index);
  Vec<Scalar> q = mean.cwiseMax(Scalar(0)).array() + ridge;
  ImportanceDiag<Scalar> imp{std::move(q), std::nullopt, ImportanceKind::sup_hessian, ridge};
  detail::check_importance(imp);
  return imp;
}

/// Quadratic part from squared gradients, quartic part 1/4 E[(d2L/dw_i^2)^2] + ridge.
template <typename Scalar>
ImportanceDiag<Scalar> importance_sup_grad_hessian(const Network<Scalar>& net, const Dataset<Scalar>& data,
                                                   const FlatIndex& index, Scalar ridge = Scalar(0)) {
  require_domain(ridge >= Scalar(0), "hessian ridge must be nonnegative");
  auto imp = importance_sup_gradient(net, data, index);
  const auto [mean, mean_sq] = detail::hessian_moments(net, data, index);
  imp.quartic = Vec<Scalar>((Scalar(0.25) * mean_sq).array() + ridge);
  imp.kind = ImportanceKind::sup_grad_hessian;
  imp.hessian_ridge = ridge;
  detail::check_importance(imp);
  return imp;
}

template <typename Scalar>
ImportanceDiag<Scalar> compute_importance(ImportanceKind kind, const Network<Scalar>& net,
                                          const Dataset<Scalar>& data, const FlatIndex& index,
                                          Scalar ridge = Scalar(0)) {
  switch (kind) {
    case ImportanceKind::baseline: return importance_baseline<Scalar>(index.size());
    case ImportanceKind::unsup_regression: return importance_unsup_regression(net, data, index);
    case ImportanceKind::unsup_classification: return importance_unsup_classification(net, data, index);
    case ImportanceKind::sup_gradient: return importance_sup_gradient(net, data, index);
    case ImportanceKind::sup_hessian: return importance_sup_hessian(net, data, index, ridge);
    case ImportanceKind::sup_grad_hessian: return importance_sup_grad_hessian(net, data, index, ridge);
  }
  throw UsageError("unknown importance kind");
}

}  // namespace rdc
