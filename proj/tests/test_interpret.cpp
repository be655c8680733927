#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spqrx/error.hpp"
#include "spqrx/interpret.hpp"
#include "spqrx/rng.hpp"

#include <cmath>
#include <memory>

using namespace spqrx;

namespace {

Eigen::MatrixXd uniform_data(Eigen::Index n, int p, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.uniform();
  }
  return x;
}

FittedModel zero_model(ModelMode mode, int p, XiActivation act) {
  const int K = 6;
  std::vector<double> interior;
  for (int i = 1; i <= K - 3; ++i) interior.push_back(static_cast<double>(i) / (K - 2));
  Network net(p, {4}, K, HiddenActivation::Sigmoid,
              mode == ModelMode::Spqr ? HeadMode::Softmax : HeadMode::SoftmaxStar, act);
  net.assign(std::vector<double>(net.num_params(), 0.0));
  Scaling s;
  s.x_mean = Eigen::VectorXd::Zero(p);
  s.x_sd = Eigen::VectorXd::Ones(p);
  return FittedModel(mode, std::make_shared<const SplineBasis>(K, 3, interior), std::move(net),
                     mode == ModelMode::Spqr ? std::nullopt
                                             : std::optional<BlendSpec>(BlendSpec(0.9, 0.99, 25, 5)),
                     s);
}

}  // namespace

TEST_CASE("ALE of a constant is zero") {
  const Eigen::MatrixXd x = uniform_data(500, 3, 1);
  for (int j = 0; j < 3; ++j) {
    const ALEProfile p = ale([](const auto&) { return 4.2; }, x, j);
    for (double e : p.centered_effects()) CHECK(e == 0.0);
    CHECK(vi_score(p, x.col(j)) == 0.0);
  }
}

TEST_CASE("ALE of a function of other columns is exactly zero") {
  const Eigen::MatrixXd x = uniform_data(800, 3, 2);
  const auto g = [](const Eigen::Ref<const Eigen::RowVectorXd>& r) {
    return std::sin(3.0 * r(0)) * std::exp(r(2));
  };
  const ALEProfile p = ale(g, x, 1);
  for (double e : p.centered_effects()) CHECK(e == 0.0);
}

TEST_CASE("ALE of the identity reproduces the centred coordinate") {
  const Eigen::MatrixXd x = uniform_data(2000, 2, 3);
  const ALEProfile p = ale([](const auto& r) { return r(0) + 0.3 * r(1) * r(1); }, x, 0, 20);
  CHECK(p.edges.size() == 21);
  CHECK(p.edges.front() == x.col(0).minCoeff());
  CHECK(p.edges.back() == x.col(0).maxCoeff());
  int total = 0;
  for (int c : p.counts) total += c;
  CHECK(total == 2000);
  const double mean = x.col(0).mean();
  const auto centred = p.centered_effects();
  for (std::size_t b = 0; b < p.edges.size(); ++b) {
    CHECK(std::fabs(centred[b] - (p.edges[b] - mean)) < 1e-12);
  }
  // Linear profile over a uniform covariate: sd of U(0,1) is 1/sqrt(12).
  CHECK(std::fabs(vi_score(p, x.col(0)) - 1.0 / std::sqrt(12.0)) < 0.01);
}

TEST_CASE("VI is invariant to shifts of g and scales with g") {
  const Eigen::MatrixXd x = uniform_data(700, 2, 4);
  const auto g = [](const Eigen::Ref<const Eigen::RowVectorXd>& r) { return r(0) * r(0) + r(1); };
  const auto shifted = [&](const Eigen::Ref<const Eigen::RowVectorXd>& r) { return g(r) + 10.0; };
  const auto scaled = [&](const Eigen::Ref<const Eigen::RowVectorXd>& r) { return -3.0 * g(r); };
  const double base = vi_score(ale(g, x, 0), x.col(0));
  CHECK(vi_score(ale(shifted, x, 0), x.col(0)) == doctest::Approx(base).epsilon(1e-10));
  CHECK(vi_score(ale(scaled, x, 0), x.col(0)) == doctest::Approx(3.0 * base).epsilon(1e-10));
}

TEST_CASE("ALE with tied covariate values") {
  Eigen::MatrixXd x = uniform_data(300, 2, 5);
  for (Eigen::Index i = 0; i < 300; ++i) x(i, 0) = std::floor(4.0 * x(i, 0)) / 4.0;
  const ALEProfile p = ale([](const auto& r) { return 2.0 * r(0); }, x, 0, 40);
  CHECK(p.edges.size() <= 4);
  for (int c : p.counts) CHECK(c > 0);
  const auto centred = p.centered_effects();
  for (std::size_t b = 1; b < p.edges.size(); ++b) {
    CHECK(centred[b] - centred[b - 1] == doctest::Approx(2.0 * (p.edges[b] - p.edges[b - 1])));
  }
  Eigen::MatrixXd constant = x;
  constant.col(1).setConstant(0.5);
  CHECK_THROWS_AS(ale([](const auto&) { return 0.0; }, constant, 1), DataError);
  CHECK_THROWS_AS(ale([](const auto&) { return 0.0; }, x, 2), ConfigError);
  CHECK_THROWS_AS(ale([](const auto&) { return 0.0; }, x, 0, 1), ConfigError);
}

TEST_CASE("multi-output ALE matches single-output ALE") {
  const Eigen::MatrixXd x = uniform_data(400, 2, 6);
  const BatchFunction g = [](const Eigen::MatrixXd& rows) {
    Eigen::MatrixXd out(rows.rows(), 2);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      out(i, 0) = rows(i, 0) * rows(i, 0);
      out(i, 1) = std::exp(rows(i, 0) * rows(i, 1));
    }
    return out;
  };
  const auto multi = ale_multi(g, x, 0, 15);
  const ALEProfile a = ale([](const auto& r) { return r(0) * r(0); }, x, 0, 15);
  const ALEProfile b = ale([](const auto& r) { return std::exp(r(0) * r(1)); }, x, 0, 15);
  CHECK(multi[0].effects == a.effects);
  CHECK(multi[1].effects == b.effects);
}

TEST_CASE("VI of constant models") {
  const Eigen::MatrixXd x = uniform_data(300, 3, 7);
  const FittedModel spqr = zero_model(ModelMode::Spqr, 3, XiActivation::scaled_tanh(-0.5, 0.7));
  const VIResult q = vi_quantile_profile(spqr, x, {0.1, 0.5, 0.9}, 10);
  CHECK(q.scores.rows() == 3);
  CHECK(q.scores.cols() == 3);
  CHECK(q.scores.isZero(0.0));
  CHECK(q.profiles.size() == 9);
  CHECK_THROWS_AS(vi_xi(spqr, x), ConfigError);
  CHECK_THROWS_AS(vi_quantile_profile(spqr, x, {0.0}), ConfigError);

  const FittedModel spqrx = zero_model(ModelMode::Spqrx, 3, XiActivation::logistic(0.0, 1.0));
  const VIResult v = vi_xi(spqrx, x, 10);
  CHECK(v.taus.empty());
  CHECK(v.scores.rows() == 1);
  CHECK(v.scores.isZero(0.0));
  CHECK(vi_quantile_profile(spqrx, x, {}, 10).taus == kDefaultVITaus);
}

TEST_CASE("VI ranks an informative covariate above an inert one") {
  // A model whose first-layer weights see only covariate 1.
  const int K = 6;
  std::vector<double> interior{0.25, 0.5, 0.75};
  Network net(2, {3}, K, HiddenActivation::Sigmoid, HeadMode::SoftmaxStar,
              XiActivation::scaled_tanh(-0.5, 0.7));
  Rng rng(8);
  std::vector<double> params(net.num_params());
  for (auto& v : params) v = 2.0 * rng.uniform() - 1.0;
  net.assign(params);
  net.layers().front().weight.col(1).setZero();
  Scaling s;
  s.x_mean = Eigen::VectorXd::Zero(2);
  s.x_sd = Eigen::VectorXd::Ones(2);
  const FittedModel m(ModelMode::Spqrx, std::make_shared<const SplineBasis>(K, 3, interior),
                      std::move(net), BlendSpec(0.9, 0.99, 25, 5), s);
  const Eigen::MatrixXd x = uniform_data(400, 2, 9);
  const VIResult q = vi_quantile_profile(m, x, {0.2, 0.8}, 10, 2);
  for (Eigen::Index t = 0; t < 2; ++t) {
    CHECK(q.scores(t, 0) > 0.0);
    CHECK(q.scores(t, 1) == 0.0);
  }
  const VIResult v = vi_xi(m, x, 10);
  CHECK(v.scores(0, 0) > 0.0);
  CHECK(v.scores(0, 1) == 0.0);
  // Threaded evaluation is identical to serial evaluation.
  CHECK(vi_quantile_profile(m, x, {0.2, 0.8}, 10, 1).scores == q.scores);
}
