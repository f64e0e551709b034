#include "test_util.hpp"

#include <rdc/io.hpp>

#include <doctest.h>

#include <sstream>

using namespace rdc;

TEST_SUITE("io") {
  TEST_CASE("model JSON round-trips bit-exactly") {
    Engine rng = make_engine(61, 0);
    const auto net = testing::random_net(rng, {3, 5, 2}, Head::classification, 0.7);
    const auto back = io::parse_model(io::model_to_json(net));
    CHECK(back.head() == Head::classification);
    CHECK(back.temperature() == 0.7);
    for (std::size_t l = 0; l < net.depth(); ++l) {
      CHECK(back.layers()[l].weights == net.layers()[l].weights);
      CHECK(back.layers()[l].bias == net.layers()[l].bias);
      CHECK(back.layers()[l].activation == net.layers()[l].activation);
    }
  }

  TEST_CASE("malformed models are usage errors") {
    CHECK_THROWS_AS(io::parse_model("{"), UsageError);
    CHECK_THROWS_AS(io::parse_model(R"({"layers":[],"head":"cls"})"), UsageError);
    CHECK_THROWS_AS(
        io::parse_model(R"({"layers":[{"weights":[[1]],"bias":[0],"activation":"tanh"}],"head":"regression"})"),
        UsageError);
    CHECK_THROWS_AS(
        io::parse_model(R"({"layers":[{"weights":[[1,2],[3]],"bias":[0,0]}],"head":"regression"})"), ShapeError);
    const auto net = io::parse_model(R"({"layers":[{"weights":[[2]],"bias":[1]}],"head":"regression"})");
    CHECK(net.temperature() == 1.0);
    CHECK(forward(net, VectorXd(VectorXd::Constant(1, 3.0)))[0] == 7.0);
  }

  TEST_CASE("dataset CSV with a label column") {
    const std::string csv = "# comment\nx0,label,x1\n1.5,1,2\n-0.5,0,3e-1\n";
    const auto d = io::parse_dataset(csv, {"label"}, Head::classification);
    CHECK(d.inputs.rows() == 2);
    CHECK(d.inputs.cols() == 2);
    CHECK(d.inputs(1, 1) == 0.3);
    CHECK(d.classes == std::vector<Index>{1, 0});
    const auto unlabeled = io::parse_dataset(csv, {}, Head::classification);
    CHECK(unlabeled.inputs.cols() == 3);
    CHECK_FALSE(unlabeled.has_labels());
    const auto reg = io::parse_dataset(csv, {"label", "x1"}, Head::regression);
    CHECK(reg.targets.cols() == 2);
    CHECK(reg.inputs.cols() == 1);
    CHECK_THROWS_AS(io::parse_dataset(csv, {"y"}, Head::classification), UsageError);
    CHECK_THROWS_AS(io::parse_dataset("a,b\n1,x\n", {}, Head::regression), UsageError);
    CHECK_THROWS_AS(io::parse_dataset("a,b\n1\n", {}, Head::regression), ShapeError);
    CHECK_THROWS_AS(io::parse_dataset("a,label\n1,0.5\n", {"label"}, Head::classification), DomainError);
  }

  TEST_CASE("numbers keep 17 significant digits") {
    CHECK(io::fmt(0.1) == "0.10000000000000001");
    CHECK(std::stod(io::fmt(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(io::fmt(2.0) == "2");
  }

  TEST_CASE("importance CSV layout") {
    Engine rng = make_engine(62, 0);
    const auto net = testing::random_net(rng, {2, 2}, Head::regression);
    const FlatIndex index(net);
    auto imp = importance_baseline<double>(index.size());
    std::ostringstream os;
    io::write_importance_csv(os, imp, index, {{"seed", "4"}});
    const std::string s = os.str();
    CHECK(s.rfind("# seed: 4\nglobal_index,layer,row,col,I,H\n0,0,0,0,1,0\n", 0) == 0);
    CHECK(s.find("\n4,0,0,bias,1,0\n") != std::string::npos);
  }

  TEST_CASE("report CSV marks missing metrics as NA") {
    ReportRow row;
    row.method = "baseline";
    row.param = 0.5;
    row.ratio = 0.5;
    row.mse = 0.25;
    std::ostringstream os;
    io::write_report_csv(os, CompressionReport{{row}}, {});
    CHECK(os.str() ==
          "method,compressor,param,ratio,mse,kl,supervised_sq,accuracy,cross_entropy,loss_shift\n"
          "baseline,prune,0.5,0.5,0.25,NA,NA,NA,NA,NA\n");
    std::ostringstream plot;
    io::write_plot_data(plot, CompressionReport{{row}}, {});
    CHECK(plot.str() == "x,y,series\n0.5,0.25,baseline:mse\n");
  }
}
