#include <rdc/relu_oracle.hpp>

#include <doctest.h>

#include <numbers>

using namespace rdc;

TEST_SUITE("relu-oracle") {
  TEST_CASE("Gauss-Laguerre integrates polynomials exactly") {
    const auto r = gauss_laguerre(6, 0.0);
    // int t^k e^{-t} = k!
    double fact = 1;
    for (int k = 0; k <= 11; ++k) {
      if (k > 0) fact *= k;
      CHECK((r.weights.array() * r.nodes.array().pow(k)).sum() == doctest::Approx(fact).epsilon(1e-12));
    }
    const auto h = gauss_laguerre(4, 0.5);
    CHECK(h.weights.sum() == doctest::Approx(std::tgamma(1.5)).epsilon(1e-14));
  }

  TEST_CASE("orthonormal Hermite polynomials") {
    const auto h = hermite_orthonormal(3, 2.0);
    CHECK(h[2] == doctest::Approx((4.0 - 1.0) / std::sqrt(2.0)));
    CHECK(h[3] == doctest::Approx((8.0 - 6.0) / std::sqrt(6.0)));
  }

  TEST_CASE("ReLU Hermite coefficients") {
    const auto hc = hermite_coeffs(40);
    CHECK(hc.sigma_hat[0] == doctest::Approx(0.3989422804014327).epsilon(1e-14));
    CHECK(hc.sigma_hat[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(std::abs(hc.sigma_hat[3]) < 1e-14);
    CHECK(hc.sigma_hat[2] == doctest::Approx(1.0 / std::sqrt(4.0 * std::numbers::pi)).epsilon(1e-13));
    CHECK(hc.closed_form_mismatch() < 1e-12);
    CHECK(std::abs(hc.parseval_sum() - 0.5) < 1e-3);
    // The squared-double-factorial variant already disagrees at p = 6.
    CHECK(std::abs(hc.printed_form[6] - hc.sigma_hat[6]) > 1e-3);
    CHECK(hc.printed_form[4] == doctest::Approx(hc.closed_form[4] * -1.0));
  }

  TEST_CASE("kernel series approaches the arc-cosine closed form") {
    // E[relu(u.z) relu(v.z)] = (sqrt(1 - rho^2) + (pi - acos rho) rho) / (2 pi).
    const auto hc = hermite_coeffs(60);
    for (double rho : {-0.9, -0.3, 0.0, 0.4, 0.8}) {
      const double exact = (std::sqrt(1 - rho * rho) + (std::numbers::pi - std::acos(rho)) * rho) / (2 * std::numbers::pi);
      CHECK(relu_kernel_series(hc, rho) == doctest::Approx(exact).epsilon(1e-6));
    }
  }

  TEST_CASE("analytic ReLU MSE special cases") {
    const auto hc = hermite_coeffs(40);
    const VectorXd w = (VectorXd(3) << 1.0, -0.5, 2.0).finished();
    const VectorXd lam = (VectorXd(3) << 1.0, 2.0, 0.5).finished();
    CHECK(analytic_relu_mse(w, w, lam, hc) < 1e-3 * w.dot(lam.asDiagonal() * w));
    CHECK(analytic_relu_mse(w, VectorXd::Zero(3), lam, hc) == doctest::Approx(0.5 * (lam.array() * w.array().square()).sum()));
    CHECK(relu_weighted_objective(w, w, lam) == 0.0);
    CHECK(relu_weighted_objective(w, VectorXd::Zero(3), VectorXd::Ones(3)) == doctest::Approx(w.squaredNorm()));
    CHECK_THROWS_AS(analytic_relu_mse(w, w, VectorXd((VectorXd(3) << 1.0, -1.0, 1.0).finished()), hc), DomainError);
  }

  TEST_CASE("analytic ReLU MSE agrees with Monte Carlo") {
    const auto hc = hermite_coeffs(40);
    const VectorXd w = (VectorXd(4) << 0.9, -0.4, 1.3, 0.2).finished();
    const VectorXd wh = (VectorXd(4) << 0.7, 0.0, 1.5, -0.3).finished();
    const VectorXd lam = (VectorXd(4) << 1.2, 0.7, 0.9, 1.8).finished();
    Engine rng = make_engine(41, stream::kMonteCarlo);
    const auto mc = mc_relu_mse(w, wh, lam, 400000, rng);
    CHECK(std::abs(analytic_relu_mse(w, wh, lam, hc) - mc.mean) <= 3 * mc.std_error + relu_mse_truncation_bound(w, wh, lam, hc));
    const auto half = mc_half_gaussian(w, wh, lam, 400000, rng);
    CHECK(std::abs(0.5 * relu_weighted_objective(w, wh, lam) - half.mean) <= 3 * half.std_error);
  }

  TEST_CASE("expansion terms") {
    const VectorXd w = (VectorXd(2) << 1.0, 2.0).finished();
    const VectorXd wh = (VectorXd(2) << 0.5, 2.0).finished();
    const VectorXd lam = (VectorXd(2) << 2.0, 1.0).finished();
    const auto t = dp_terms(w, wh, lam);
    CHECK(dp_term(t, 0) == 0.0);
    CHECK(dp_term(t, 1) == doctest::Approx(relu_weighted_objective(w, wh, lam)));
  }

  TEST_CASE("pruning verifier on a dominant weight") {
    const auto hc = hermite_coeffs(40);
    const auto v = verify_prune_optimality((VectorXd(2) << 3.0, 1.0).finished(), VectorXd::Ones(2), 1, hc);
    REQUIRE(v.objective_argmin.size() == 1);
    CHECK(v.objective_argmin[0] == 1u);
    CHECK(v.mse_argmin == v.objective_argmin);
    CHECK(v.agree);
    CHECK_THROWS_AS(verify_prune_optimality(VectorXd::Ones(21), VectorXd::Ones(21), 3, hc), DomainError);
  }

  TEST_CASE("quantization verifier edge cases") {
    const auto hc = hermite_coeffs(40);
    const VectorXd lam = (VectorXd(3) << 1.0, 0.5, 2.0).finished();
    const VectorXd w = (VectorXd(3) << 0.3, -1.0, 0.8).finished();
    const auto full = verify_quant_optimality(w, lam, 3, hc);
    CHECK(full.objective_min == doctest::Approx(0.0));
    // The truncated series leaves a residual even for an exact copy.
    CHECK(full.mse_min <= relu_mse_truncation_bound(w, w, lam, hc));
    CHECK(full.agree);
    const VectorXd pair = (VectorXd(2) << 0.7, 0.7).finished();
    const auto same = verify_quant_optimality(pair, VectorXd::Ones(2), 1, hc);
    CHECK(same.objective_centroids[0] == doctest::Approx(0.7));
    CHECK(same.mse_min <= relu_mse_truncation_bound(pair, pair, VectorXd(VectorXd::Ones(2)), hc));
    CHECK_THROWS_AS(verify_quant_optimality(VectorXd::Ones(9), VectorXd::Ones(9), 2, hc), DomainError);
  }
}
