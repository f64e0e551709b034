#include "test_util.hpp"

#include <rdc/importance.hpp>
#include <rdc/relu_oracle.hpp>

#include <doctest.h>

using namespace rdc;

namespace {

Network<double> linear_model(const VectorXd& w) {
  DenseLayer<double> layer{MatrixXd(w.transpose()), VectorXd::Zero(1), Activation::identity};
  return Network<double>({layer}, Head::regression);
}

Dataset<double> gaussian_inputs(Engine& rng, Index n, const VectorXd& sd) {
  Dataset<double> d;
  d.inputs.resize(n, sd.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < sd.size(); ++j) d.inputs(i, j) = sd[j] * normal(rng);
  return d;
}

}  // namespace

TEST_SUITE("importance") {
  TEST_CASE("linear model importance is the empirical input second moment") {
    Engine rng = make_engine(11, 0);
    const auto data = gaussian_inputs(rng, 500, (VectorXd(3) << 1.0, 2.0, 0.5).finished());
    const auto net = linear_model((VectorXd(3) << 0.2, -0.7, 1.1).finished());
    const FlatIndex index(net, false);
    const auto imp = importance_unsup_regression(net, data, index);
    VectorXd second = VectorXd::Zero(3);
    for (Index i = 0; i < data.size(); ++i) second += data.inputs.row(i).transpose().cwiseAbs2();
    second /= double(data.size());
    CHECK(imp.quadratic == second);
    CHECK_FALSE(imp.quartic.has_value());
  }

  TEST_CASE("single ReLU unit importance is half the input second moment") {
    // A symmetric sample set (x and -x) makes the half-Gaussian identity exact
    // for the Jacobian of relu(w^T x), up to ties at w^T x = 0.
    Engine rng = make_engine(12, 0);
    auto data = gaussian_inputs(rng, 20000, (VectorXd(2) << 1.0, 1.5).finished());
    Dataset<double> sym;
    sym.inputs.resize(2 * data.size(), 2);
    sym.inputs << data.inputs, -data.inputs;
    DenseLayer<double> h{(MatrixXd(1, 2) << 0.8, -0.4).finished(), VectorXd::Zero(1), Activation::relu};
    DenseLayer<double> o{MatrixXd::Ones(1, 1), VectorXd::Zero(1), Activation::identity};
    const Network<double> net({h, o}, Head::regression);
    const FlatIndex index(net, false);
    const auto imp = importance_unsup_regression(net, sym, index);
    VectorXd lambda = VectorXd::Zero(2);
    for (Index i = 0; i < sym.size(); ++i) lambda += sym.inputs.row(i).transpose().cwiseAbs2();
    lambda /= double(sym.size());
    CHECK(imp.quadratic[0] == doctest::Approx(0.5 * lambda[0]).epsilon(1e-12));
    CHECK(imp.quadratic[1] == doctest::Approx(0.5 * lambda[1]).epsilon(1e-12));
  }

  TEST_CASE("uniform-output classifier has zero importance") {
    DenseLayer<double> layer{MatrixXd::Zero(3, 2), VectorXd::Zero(3), Activation::identity};
    const Network<double> net({layer}, Head::classification);
    Dataset<double> data;
    data.inputs = MatrixXd::Zero(5, 2);
    // Softmax outputs always move with the biases, so only the weight Jacobian can vanish.
    const auto imp = importance_unsup_classification(net, data, FlatIndex(net, false));
    CHECK(imp.quadratic.cwiseAbs().maxCoeff() == 0.0);
    CHECK(importance_unsup_classification(net, data, FlatIndex(net)).quadratic.maxCoeff() > 0.0);
  }

  TEST_CASE("one-sample two-class importance by hand") {
    // Two logits z = (a x, b x) from a 1-2 net without biases.
    const double a = 0.7, b = -0.3, x = 1.3, temp = 1.5;
    DenseLayer<double> layer{(MatrixXd(2, 1) << a, b).finished(), VectorXd::Zero(2), Activation::identity};
    const Network<double> net({layer}, Head::classification, temp);
    Dataset<double> data;
    data.inputs = MatrixXd::Constant(1, 1, x);
    const auto imp = importance_unsup_classification(net, data, FlatIndex(net, false));
    const double e1 = std::exp(a * x / temp), e2 = std::exp(b * x / temp);
    const double p1 = e1 / (e1 + e2), p2 = e2 / (e1 + e2);
    // dp1/da = p1 p2 x / T, dp2/da = -p1 p2 x / T; same magnitude for b.
    const double d = p1 * p2 * x / temp;
    const double expected = d * d / p1 + d * d / p2;
    CHECK(imp.quadratic[0] == doctest::Approx(expected).epsilon(1e-13));
    CHECK(imp.quadratic[1] == doctest::Approx(expected).epsilon(1e-13));
  }

  TEST_CASE("supervised importances on linear regression") {
    const VectorXd w = (VectorXd(2) << 1.0, -2.0).finished();
    const auto net = linear_model(w);
    const FlatIndex index(net, false);
    Dataset<double> data;
    data.inputs = (MatrixXd(3, 2) << 1.0, 0.5, -2.0, 1.0, 0.3, 0.3).finished();
    data.targets = data.inputs * w;  // perfect fit

    const auto g = importance_sup_gradient(net, data, index);
    CHECK(g.quadratic.cwiseAbs().maxCoeff() == 0.0);

    const auto h = importance_sup_hessian(net, data, index, 0.25);
    const VectorXd mean_x2 = data.inputs.cwiseAbs2().colwise().mean().transpose();
    CHECK((h.quadratic - (2 * mean_x2).array().matrix() - VectorXd::Constant(2, 0.25)).norm() < 1e-14);

    const auto gh = importance_sup_grad_hessian(net, data, index, 0.0);
    const VectorXd mean_x4 = data.inputs.array().pow(4).colwise().mean().transpose();
    CHECK(gh.quadratic.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(gh.quartic.has_value());
    CHECK((*gh.quartic - mean_x4).norm() < 1e-14);

    Dataset<double> one;
    one.inputs = (MatrixXd(1, 2) << 0.5, -1.5).finished();
    one.targets = MatrixXd::Constant(1, 1, 0.2);
    const double r = w.dot(one.inputs.row(0).transpose()) - 0.2;
    const auto g1 = importance_sup_gradient(net, one, index);
    CHECK((g1.quadratic - 4 * r * r * one.inputs.row(0).transpose().cwiseAbs2()).norm() < 1e-13);
  }

  TEST_CASE("dead weights get zero Hessian importance without a ridge") {
    DenseLayer<double> hidden{(MatrixXd(1, 1) << -1.0).finished(), VectorXd::Constant(1, -0.5), Activation::relu};
    DenseLayer<double> out{MatrixXd::Ones(1, 1), VectorXd::Zero(1), Activation::identity};
    const Network<double> net({hidden, out}, Head::regression);
    Dataset<double> data;
    data.inputs = (MatrixXd(3, 1) << 0.1, 0.4, 2.0).finished();  // -x - 0.5 < 0 throughout
    data.targets = MatrixXd::Constant(3, 1, 1.0);
    const auto imp = importance_sup_hessian(net, data, FlatIndex(net), 0.0);
    CHECK(imp.quadratic[0] == 0.0);
    CHECK(imp.quadratic[1] == 0.0);
  }

  TEST_CASE("quartic Hessian importance ignores the sign of the Hessian") {
    // A classifier's Hessian diagonal can be negative in hidden layers; the
    // quartic part squares it so it stays nonnegative.
    Engine rng = make_engine(13, 0);
    const auto net = testing::random_net(rng, {3, 4, 3}, Head::classification);
    Dataset<double> data;
    data.inputs = MatrixXd::NullaryExpr(40, 3, [&] { return std::normal_distribution<double>()(rng); });
    for (int i = 0; i < 40; ++i) data.classes.push_back(i % 3);
    const auto gh = importance_sup_grad_hessian(net, data, FlatIndex(net), 0.0);
    REQUIRE(gh.quartic.has_value());
    CHECK(gh.quartic->minCoeff() >= 0.0);
    const auto hs = importance_sup_hessian(net, data, FlatIndex(net), 0.0);
    CHECK(hs.quadratic.minCoeff() >= 0.0);
  }

  TEST_CASE("labels and heads are validated") {
    const auto net = linear_model(VectorXd::Ones(2));
    Dataset<double> data;
    data.inputs = MatrixXd::Ones(3, 2);
    CHECK_THROWS_AS(importance_sup_gradient(net, data, FlatIndex(net)), UsageError);
    CHECK_THROWS_AS(importance_unsup_classification(net, data, FlatIndex(net)), UsageError);
    Dataset<double> empty;
    empty.inputs = MatrixXd::Zero(0, 2);
    CHECK_THROWS_AS(importance_unsup_regression(net, empty, FlatIndex(net)), DomainError);
    CHECK(parse_importance_kind("grad-hess") == ImportanceKind::sup_grad_hessian);
    CHECK_THROWS_AS(parse_importance_kind("fisher"), UsageError);
    CHECK(needs_labels(ImportanceKind::sup_gradient));
    CHECK_FALSE(needs_labels(ImportanceKind::unsup_classification));
  }
}
