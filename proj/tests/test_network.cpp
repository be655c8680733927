#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "spqrx/error.hpp"
#include "spqrx/network.hpp"
#include "spqrx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace spqrx;

namespace {

Network zero_network(HeadMode head, XiActivation xi = XiActivation::scaled_tanh(-0.5, 0.7)) {
  Network net(3, {4, 4}, 5, HiddenActivation::Sigmoid, head, xi);
  net.assign(std::vector<double>(net.num_params(), 0.0));
  return net;
}

Network random_network(HiddenActivation act, HeadMode head, std::uint64_t seed,
                       double spread = 1.0) {
  Network net(3, {4, 4}, 5, act, head, XiActivation::scaled_tanh(-0.5, 0.7));
  Rng rng(seed);
  std::vector<double> p(net.num_params());
  for (auto& v : p) v = spread * (2.0 * rng.uniform() - 1.0);
  net.assign(p);
  return net;
}

Eigen::MatrixXd random_inputs(int p, int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(p, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < p; ++i) x(i, j) = 4.0 * rng.uniform() - 2.0;
  }
  return x;
}

// Smooth test loss of the network outputs over a batch:
// L = sum_i [ a_i xi_i + sum_k c_ik log w_ik ].
struct TestLoss {
  Eigen::VectorXd a;
  Eigen::MatrixXd c;

  double value(const Network& net, const Eigen::MatrixXd& x) const {
    const ForwardCache fc = net.forward_batch(x);
    double s = (c.array() * fc.weights.array().log()).sum();
    if (net.head() == HeadMode::SoftmaxStar) s += a.dot(fc.xi);
    return s;
  }
  std::vector<double> gradient(const Network& net, const Eigen::MatrixXd& x) const {
    const ForwardCache fc = net.forward_batch(x);
    const Eigen::MatrixXd gw = (c.array() / fc.weights.array()).matrix();
    return net.backward(fc, a, gw);
  }
};

TestLoss random_loss(int K, int n, std::uint64_t seed) {
  Rng rng(seed);
  TestLoss l{Eigen::VectorXd(n), Eigen::MatrixXd(K, n)};
  for (int i = 0; i < n; ++i) {
    l.a(i) = 2.0 * rng.uniform() - 1.0;
    for (int k = 0; k < K; ++k) l.c(k, i) = 2.0 * rng.uniform() - 1.0;
  }
  return l;
}

}  // namespace

TEST_CASE("zero network gives uniform weights and the range midpoint") {
  const Eigen::Vector3d x(0.3, -1.0, 2.0);
  const NetworkOutput a = zero_network(HeadMode::Softmax).forward(x);
  for (int k = 0; k < 5; ++k) CHECK(a.weights(k) == doctest::Approx(0.2).epsilon(1e-15));
  const NetworkOutput b = zero_network(HeadMode::SoftmaxStar).forward(x);
  CHECK(b.xi == doctest::Approx(0.1).epsilon(1e-15));
  for (int k = 0; k < 5; ++k) CHECK(b.weights(k) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("random networks give convex weights and bounded xi") {
  Rng rng(1);
  for (int draw = 0; draw < 1000; ++draw) {
    const Network net = random_network(draw % 2 ? HiddenActivation::Relu : HiddenActivation::Sigmoid,
                                       HeadMode::SoftmaxStar, 1000 + static_cast<std::uint64_t>(draw), 1.0);
    const Eigen::Vector3d x(4 * rng.uniform() - 2, 4 * rng.uniform() - 2, 4 * rng.uniform() - 2);
    const NetworkOutput o = net.forward(x);
    CHECK(std::fabs(o.weights.sum() - 1.0) < 1e-12);
    CHECK(o.weights.minCoeff() >= 0.0);
    CHECK(o.weights.maxCoeff() <= 1.0);
    CHECK(o.xi > -0.5);
    CHECK(o.xi < 0.7);
  }
}

TEST_CASE("forward is deterministic and agrees with the batched pass") {
  const Network net = random_network(HiddenActivation::Sigmoid, HeadMode::SoftmaxStar, 5);
  const Eigen::MatrixXd x = random_inputs(3, 10, 6);
  const ForwardCache fc = net.forward_batch(x);
  for (int j = 0; j < 10; ++j) {
    const NetworkOutput a = net.forward(x.col(j));
    const NetworkOutput b = net.forward(x.col(j));
    CHECK(a.xi == b.xi);
    CHECK(a.weights == b.weights);
    CHECK(a.xi == fc.xi(j));
    CHECK((a.weights - fc.weights.col(j)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("softmax is permutation-equivariant in its logits") {
  Network net = random_network(HiddenActivation::Sigmoid, HeadMode::Softmax, 8);
  const Eigen::Vector3d x(0.1, 0.2, -0.3);
  const NetworkOutput before = net.forward(x);
  Layer& out = net.layers().back();
  const std::vector<int> perm{3, 0, 4, 1, 2};
  const Layer copy = out;
  for (int k = 0; k < 5; ++k) {
    out.weight.row(k) = copy.weight.row(perm[static_cast<std::size_t>(k)]);
    out.bias(k) = copy.bias(perm[static_cast<std::size_t>(k)]);
  }
  const NetworkOutput after = net.forward(x);
  for (int k = 0; k < 5; ++k) {
    CHECK(after.weights(k) == doctest::Approx(before.weights(perm[static_cast<std::size_t>(k)])).epsilon(1e-14));
  }
}

TEST_CASE("softmax is stable for large logits") {
  Network net = zero_network(HeadMode::Softmax);
  net.layers().back().bias << 800.0, 800.0, -800.0, 0.0, 799.0;
  const NetworkOutput o = net.forward(Eigen::Vector3d::Zero());
  CHECK(o.weights.allFinite());
  CHECK(std::fabs(o.weights.sum() - 1.0) < 1e-12);
  CHECK(o.weights(0) == doctest::Approx(o.weights(1)));
}

TEST_CASE("gradient matches central finite differences") {
  for (HiddenActivation act : {HiddenActivation::Sigmoid, HiddenActivation::Relu}) {
    for (HeadMode head : {HeadMode::Softmax, HeadMode::SoftmaxStar}) {
      const Network net = random_network(act, head, 42);
      const Eigen::MatrixXd x = random_inputs(3, 7, 43);
      const TestLoss loss = random_loss(5, 7, 44);
      const std::vector<double> grad = loss.gradient(net, x);
      std::vector<double> params = net.flatten();
      REQUIRE(grad.size() == params.size());
      Network probe = net;
      const double h = 1e-6;
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        probe.assign(params);
        const double up = loss.value(probe, x);
        params[i] = keep - h;
        probe.assign(params);
        const double down = loss.value(probe, x);
        params[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        CHECK(std::fabs(fd - grad[i]) <= 1e-4 * std::max(1.0, std::fabs(fd)));
      }
    }
  }
}

TEST_CASE("constant loss has zero gradient") {
  const Network net = random_network(HiddenActivation::Sigmoid, HeadMode::SoftmaxStar, 3);
  const Eigen::MatrixXd x = random_inputs(3, 4, 4);
  const ForwardCache fc = net.forward_batch(x);
  const auto g = net.backward(fc, Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Zero(5, 4));
  CHECK(std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; }));
  // A loss depending on the weights only through their sum is constant too.
  const auto g2 = net.backward(fc, Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Constant(5, 4, 3.0));
  for (double v : g2) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("L1 penalty on the xi row") {
  Network net(2, {2}, 3, HiddenActivation::Sigmoid, HeadMode::SoftmaxStar,
              XiActivation::scaled_tanh(-0.5, 0.7));
  net.assign(std::vector<double>(net.num_params(), 0.0));
  CHECK(net.l1_penalty(0.1) == 0.0);
  Layer& out = net.layers().back();
  out.weight(0, 0) = 1.0;
  out.weight(0, 1) = -2.0;
  out.bias(0) = 0.5;
  out.weight(2, 1) = 7.0;  // softmax rows are not penalised
  CHECK(net.l1_penalty(0.1) == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(net.l1_penalty(0.0) == 0.0);
  // Generic sum-abs oracle over the xi row.
  const double oracle_sum = out.weight.row(0).cwiseAbs().sum() + std::fabs(out.bias(0));
  CHECK(net.l1_penalty(0.1) == doctest::Approx(0.1 * oracle_sum));

  std::vector<double> grad(net.num_params(), 0.0);
  net.add_l1_gradient(0.1, grad);
  Network g = net;
  g.assign(grad);
  CHECK(g.layers().back().weight(0, 0) == doctest::Approx(0.1));
  CHECK(g.layers().back().weight(0, 1) == doctest::Approx(-0.1));
  CHECK(g.layers().back().bias(0) == doctest::Approx(0.1));
  double other = 0.0;
  for (double v : grad) other += std::fabs(v);
  CHECK(other == doctest::Approx(0.3));

  Network plain(2, {2}, 3, HiddenActivation::Sigmoid, HeadMode::Softmax, XiActivation{});
  plain.assign(std::vector<double>(plain.num_params(), 1.0));
  CHECK(plain.l1_penalty(0.5) == 0.0);
}

TEST_CASE("xi activations") {
  const XiActivation t = XiActivation::scaled_tanh(-0.5, 0.7);
  const XiActivation l = XiActivation::logistic(0.0, 1.0);
  const XiActivation e = XiActivation::exponential(0.0);
  for (const XiActivation& a : {t, l, e}) {
    double prev = a.apply(-30.0);
    for (double z = -29.5; z <= 30.0; z += 0.5) {
      const double v = a.apply(z);
      CHECK(v >= prev);
      if (std::fabs(z) < 15.0) CHECK(v > prev);
      prev = v;
      CHECK(v >= a.lo);
      if (a.bounded_above()) CHECK(v <= a.hi);
    }
    for (double z : {-2.0, -0.3, 0.0, 1.1}) {
      CHECK(a.inverse(a.apply(z)) == doctest::Approx(z).epsilon(1e-10));
      const double fd = oracle::central_difference([&](double s) { return a.apply(s); }, z, 1e-6);
      CHECK(oracle::relative_error(fd, a.deriv(z)) < 1e-7);
    }
  }
  CHECK(t.apply(0.0) == doctest::Approx(0.1));
  CHECK(l.apply(0.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(XiActivation::scaled_tanh(0.7, -0.5).validate(), ConfigError);
  CHECK_THROWS_AS(t.inverse(0.7), ConfigError);
}

TEST_CASE("initialisation") {
  const Network a = Network::initialize(3, {4, 4}, 5, HiddenActivation::Sigmoid,
                                        HeadMode::SoftmaxStar,
                                        XiActivation::scaled_tanh(-0.5, 0.7), 9);
  const Network b = Network::initialize(3, {4, 4}, 5, HiddenActivation::Sigmoid,
                                        HeadMode::SoftmaxStar,
                                        XiActivation::scaled_tanh(-0.5, 0.7), 9);
  CHECK(a.flatten() == b.flatten());
  const Eigen::MatrixXd x = random_inputs(3, 20, 1);
  const ForwardCache fc = a.forward_batch(x);
  for (int j = 0; j < 20; ++j) CHECK(fc.xi(j) == doctest::Approx(0.2).epsilon(1e-14));
  // Glorot bound sqrt(6 / (n_in + n_out)) on the first layer.
  const double bound = std::sqrt(6.0 / 7.0);
  CHECK(a.layers()[0].weight.cwiseAbs().maxCoeff() <= bound);
  CHECK(a.layers()[0].bias.isZero());

  const Network soft = Network::initialize(3, {4, 4}, 5, HiddenActivation::Sigmoid,
                                           HeadMode::Softmax, XiActivation{}, 9);
  const Network star = soft.with_xi_head(XiActivation::logistic(), 0.3);
  CHECK(star.head() == HeadMode::SoftmaxStar);
  CHECK(star.num_params() == soft.num_params() + 5);
  const NetworkOutput o1 = soft.forward(x.col(0)), o2 = star.forward(x.col(0));
  CHECK((o1.weights - o2.weights).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(o2.xi == doctest::Approx(0.3));
  CHECK_THROWS_AS(star.with_xi_head(XiActivation::logistic()), ConfigError);
}

TEST_CASE("dimension and value checks") {
  const Network net = zero_network(HeadMode::Softmax);
  CHECK_THROWS_AS(net.forward(Eigen::Vector2d::Zero()), DataError);
  Eigen::Vector3d bad(0.0, std::nan(""), 1.0);
  CHECK_THROWS_AS(net.forward(bad), DataError);
  Network copy = net;
  CHECK_THROWS_AS(copy.assign(std::vector<double>(3, 0.0)), ConfigError);
  CHECK_THROWS_AS(Network(0, {4}, 5, HiddenActivation::Sigmoid, HeadMode::Softmax, XiActivation{}),
                  ConfigError);
  CHECK_THROWS_AS(parse_hidden_activation("tanh"), ConfigError);
  CHECK(parse_head_mode(to_string(HeadMode::SoftmaxStar)) == HeadMode::SoftmaxStar);
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient leaves parameters unchanged and decays moments") {
    AdamState s;
    std::vector<double> p{1.0, -2.0};
    adam_step(s, p, {0.5, -0.5}, 0.01);
    const std::vector<double> m = s.m, v = s.v, kept = p;
    adam_step(s, p, {0.0, 0.0}, 0.01);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(s.m[i] == doctest::Approx(0.9 * m[i]));
      CHECK(s.v[i] == doctest::Approx(0.999 * v[i]));
    }
    AdamState fresh;
    std::vector<double> q{1.0, -2.0};
    adam_step(fresh, q, {0.0, 0.0}, 0.01);
    CHECK(q == std::vector<double>{1.0, -2.0});
  }
  SUBCASE("first step moves each coordinate by about lr against the gradient sign") {
    AdamState s;
    std::vector<double> p{0.0, 0.0, 0.0};
    adam_step(s, p, {3.0, -0.02, 150.0}, 1e-3);
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(1e-3).epsilon(1e-5));
    CHECK(p[2] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(s.step == 1);
  }
  SUBCASE("quadratic bowl converges to the optimum") {
    const std::vector<double> target{1.5, -0.7, 3.0};
    const std::vector<double> curvature{1.0, 10.0, 0.3};
    AdamState s;
    std::vector<double> p{0.0, 0.0, 0.0};
    for (int it = 0; it < 2000; ++it) {
      std::vector<double> g(3);
      for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * curvature[i] * (p[i] - target[i]);
      adam_step(s, p, g, it < 1000 ? 0.05 : 0.005);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(p[i] - target[i]) < 1e-4);
  }
  SUBCASE("non-finite gradients are rejected") {
    AdamState s;
    std::vector<double> p{0.0};
    CHECK_THROWS_AS(adam_step(s, p, {std::nan("")}, 0.01), NumericalError);
    CHECK_THROWS_AS(adam_step(s, p, {1.0, 2.0}, 0.01), ConfigError);
  }
}
