#include "spqrx/network.hpp"

#include "spqrx/error.hpp"
#include "spqrx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace spqrx {

std::string to_string(HiddenActivation a) {
  return a == HiddenActivation::Sigmoid ? "sigmoid" : "relu";
}

std::string to_string(HeadMode h) {
  return h == HeadMode::Softmax ? "softmax" : "softmax_star";
}

HiddenActivation parse_hidden_activation(const std::string& s) {
  if (s == "sigmoid") return HiddenActivation::Sigmoid;
  if (s == "relu") return HiddenActivation::Relu;
  throw ConfigError("unknown hidden activation '" + s +
                    "' (expected sigmoid or relu)");
}

HeadMode parse_head_mode(const std::string& s) {
  if (s == "softmax") return HeadMode::Softmax;
  if (s == "softmax_star") return HeadMode::SoftmaxStar;
  throw ConfigError("unknown head mode '" + s + "'");
}

std::string to_string(XiActivation::Kind k) {
  switch (k) {
    case XiActivation::Kind::ScaledTanh:
      return "scaled_tanh";
    case XiActivation::Kind::Logistic:
      return "logistic";
    case XiActivation::Kind::Exponential:
      return "exponential";
  }
  return "";
}

XiActivation::Kind parse_xi_kind(const std::string& s) {
  if (s == "scaled_tanh") return XiActivation::Kind::ScaledTanh;
  if (s == "logistic") return XiActivation::Kind::Logistic;
  if (s == "exponential") return XiActivation::Kind::Exponential;
  throw ConfigError("unknown xi activation '" + s +
                    "' (expected scaled_tanh, logistic or exponential)");
}

XiActivation XiActivation::scaled_tanh(double lo, double hi) {
  XiActivation a{Kind::ScaledTanh, lo, hi};
  a.validate();
  return a;
}

XiActivation XiActivation::logistic(double lo, double hi) {
  XiActivation a{Kind::Logistic, lo, hi};
  a.validate();
  return a;
}

XiActivation XiActivation::exponential(double lo) {
  XiActivation a{Kind::Exponential, lo, std::numeric_limits<double>::infinity()};
  a.validate();
  return a;
}

void XiActivation::validate() const {
  if (!std::isfinite(lo)) throw ConfigError("xi activation lower bound must be finite");
  if (bounded_above() && !(hi > lo && std::isfinite(hi))) {
    throw ConfigError("xi activation needs finite bounds lo < hi");
  }
}

double XiActivation::apply(double z) const {
  switch (kind) {
    case Kind::ScaledTanh:
      return lo + (hi - lo) * 0.5 * (std::tanh(z) + 1.0);
    case Kind::Logistic:
      return lo + (hi - lo) / (1.0 + std::exp(-z));
    case Kind::Exponential:
      return lo + std::exp(z);
  }
  return 0.0;
}

double XiActivation::deriv(double z) const {
  switch (kind) {
    case Kind::ScaledTanh: {
      const double t = std::tanh(z);
      return (hi - lo) * 0.5 * (1.0 - t * t);
    }
    case Kind::Logistic: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return (hi - lo) * s * (1.0 - s);
    }
    case Kind::Exponential:
      return std::exp(z);
  }
  return 0.0;
}

double XiActivation::inverse(double xi) const {
  if (!(xi > lo) || (bounded_above() && !(xi < hi))) {
    std::ostringstream msg;
    msg << "xi = " << xi << " is outside the range of the "
        << to_string(kind) << " activation";
    throw ConfigError(msg.str());
  }
  switch (kind) {
    case Kind::ScaledTanh:
      return std::atanh(2.0 * (xi - lo) / (hi - lo) - 1.0);
    case Kind::Logistic: {
      const double q = (xi - lo) / (hi - lo);
      return std::log(q / (1.0 - q));
    }
    case Kind::Exponential:
      return std::log(xi - lo);
  }
  return 0.0;
}

namespace {

void apply_hidden(HiddenActivation act, Eigen::MatrixXd& z) {
  if (act == HiddenActivation::Sigmoid) {
    z = (1.0 + (-z.array()).exp()).inverse().matrix();
  } else {
    z = z.cwiseMax(0.0);
  }
}

// Derivative of the activation expressed through its output.
Eigen::ArrayXXd hidden_deriv(HiddenActivation act, const Eigen::MatrixXd& a) {
  if (act == HiddenActivation::Sigmoid) {
    return a.array() * (1.0 - a.array());
  }
  return (a.array() > 0.0).cast<double>();
}

}  // namespace

Network::Network(int input_dim, std::vector<int> hidden, int num_basis,
                 HiddenActivation hidden_act, HeadMode head,
                 XiActivation xi_act)
    : input_dim_(input_dim),
      hidden_(std::move(hidden)),
      num_basis_(num_basis),
      hidden_act_(hidden_act),
      head_(head),
      xi_act_(xi_act) {
  if (input_dim_ < 1) throw ConfigError("network needs at least one input");
  if (num_basis_ < 1) throw ConfigError("network needs at least one output weight");
  for (int h : hidden_) {
    if (h < 1) throw ConfigError("hidden layer widths must be positive");
  }
  if (head_ == HeadMode::SoftmaxStar) xi_act_.validate();
  int n_in = input_dim_;
  const int n_out = num_basis_ + (head_ == HeadMode::SoftmaxStar ? 1 : 0);
  for (std::size_t h = 0; h <= hidden_.size(); ++h) {
    const int width = h < hidden_.size() ? hidden_[h] : n_out;
    layers_.push_back({Eigen::MatrixXd::Zero(width, n_in),
                       Eigen::VectorXd::Zero(width)});
    n_in = width;
  }
}

Network Network::initialize(int input_dim, const std::vector<int>& hidden,
                            int num_basis, HiddenActivation hidden_act,
                            HeadMode head, XiActivation xi_act,
                            std::uint64_t seed, double xi_init) {
  Network net(input_dim, hidden, num_basis, hidden_act, head, xi_act);
  Rng rng(seed);
  for (Layer& layer : net.layers_) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.weight.rows() +
                                            layer.weight.cols()));
    // Column-major fill keeps the draw order identical to flatten().
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        layer.weight(r, c) = limit * (2.0 * rng.uniform() - 1.0);
      }
    }
  }
  if (head == HeadMode::SoftmaxStar) {
    Layer& out = net.layers_.back();
    out.weight.row(0).setZero();
    out.bias(0) = xi_act.inverse(xi_init);
  }
  return net;
}

Network Network::with_xi_head(XiActivation xi_act, double xi_init) const {
  if (head_ != HeadMode::Softmax) {
    throw ConfigError("network already has a xi head");
  }
  Network net = *this;
  net.head_ = HeadMode::SoftmaxStar;
  net.xi_act_ = xi_act;
  net.xi_act_.validate();
  Layer& out = net.layers_.back();
  Layer grown{Eigen::MatrixXd::Zero(out.weight.rows() + 1, out.weight.cols()),
              Eigen::VectorXd::Zero(out.bias.size() + 1)};
  grown.weight.bottomRows(out.weight.rows()) = out.weight;
  grown.bias.tail(out.bias.size()) = out.bias;
  grown.bias(0) = xi_act.inverse(xi_init);
  out = std::move(grown);
  return net;
}

std::size_t Network::num_params() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> Network::flatten() const {
  std::vector<double> flat;
  flat.reserve(num_params());
  for (const Layer& l : layers_) {
    flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return flat;
}

void Network::assign(const std::vector<double>& flat) {
  if (flat.size() != num_params()) {
    throw ConfigError("parameter vector length does not match the network");
  }
  std::size_t pos = 0;
  for (Layer& l : layers_) {
    std::copy_n(flat.begin() + pos, l.weight.size(), l.weight.data());
    pos += l.weight.size();
    std::copy_n(flat.begin() + pos, l.bias.size(), l.bias.data());
    pos += l.bias.size();
  }
}

std::size_t Network::output_offset() const {
  std::size_t n = 0;
  for (std::size_t h = 0; h + 1 < layers_.size(); ++h) {
    n += layers_[h].weight.size() + layers_[h].bias.size();
  }
  return n;
}

NetworkOutput Network::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const ForwardCache cache = forward_batch(x);
  NetworkOutput out;
  out.weights = cache.weights.col(0);
  if (head_ == HeadMode::SoftmaxStar) out.xi = cache.xi(0);
  return out;
}

ForwardCache Network::forward_batch(
    const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != input_dim_) {
    std::ostringstream msg;
    msg << "network expects " << input_dim_ << " covariates, got " << x.rows();
    throw DataError(msg.str());
  }
  if (!x.allFinite()) throw DataError("non-finite covariate value");
  ForwardCache cache;
  cache.activations.reserve(layers_.size());
  cache.activations.emplace_back(x);
  for (std::size_t h = 0; h + 1 < layers_.size(); ++h) {
    Eigen::MatrixXd z = layers_[h].weight * cache.activations.back();
    z.colwise() += layers_[h].bias;
    apply_hidden(hidden_act_, z);
    cache.activations.push_back(std::move(z));
  }
  Eigen::MatrixXd out = layers_.back().weight * cache.activations.back();
  out.colwise() += layers_.back().bias;

  const Eigen::Index n = x.cols();
  const Eigen::Index off = head_ == HeadMode::SoftmaxStar ? 1 : 0;
  Eigen::MatrixXd logits = out.bottomRows(num_basis_);
  Eigen::RowVectorXd mx = logits.colwise().maxCoeff();
  logits.rowwise() -= mx;
  logits = logits.array().exp().matrix();
  Eigen::RowVectorXd total = logits.colwise().sum();
  cache.weights = logits.array().rowwise() / total.array();
  if (off == 1) {
    cache.xi_pre = out.topRows(1);
    cache.xi.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      cache.xi(j) = xi_act_.apply(cache.xi_pre(0, j));
    }
  }
  return cache;
}

std::vector<double> Network::backward(const ForwardCache& cache,
                                      const Eigen::VectorXd& grad_xi,
                                      const Eigen::MatrixXd& grad_w) const {
  const Eigen::Index n = cache.weights.cols();
  const Eigen::Index off = head_ == HeadMode::SoftmaxStar ? 1 : 0;
  Eigen::MatrixXd dz(num_basis_ + off, n);
  // Softmax Jacobian: dL/dlogit_k = w_k (g_k - sum_j w_j g_j).
  const Eigen::RowVectorXd wg =
      (cache.weights.array() * grad_w.array()).colwise().sum();
  dz.bottomRows(num_basis_) =
      cache.weights.array() * (grad_w.rowwise() - wg).array();
  if (off == 1) {
    for (Eigen::Index j = 0; j < n; ++j) {
      dz(0, j) = grad_xi(j) * xi_act_.deriv(cache.xi_pre(0, j));
    }
  }

  std::vector<Layer> grads(layers_.size());
  for (std::size_t h = layers_.size(); h-- > 0;) {
    const Eigen::MatrixXd& a_prev = cache.activations[h];
    grads[h].weight = dz * a_prev.transpose();
    grads[h].bias = dz.rowwise().sum();
    if (h > 0) {
      Eigen::MatrixXd da = layers_[h].weight.transpose() * dz;
      dz = (da.array() * hidden_deriv(hidden_act_, a_prev)).matrix();
    }
  }
  std::vector<double> flat;
  flat.reserve(num_params());
  for (const Layer& l : grads) {
    flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return flat;
}

double Network::l1_penalty(double coefficient) const {
  if (head_ != HeadMode::SoftmaxStar || coefficient == 0.0) return 0.0;
  const Layer& out = layers_.back();
  return coefficient * (out.weight.row(0).cwiseAbs().sum() + std::fabs(out.bias(0)));
}

void Network::add_l1_gradient(double coefficient,
                              std::vector<double>& grad) const {
  if (head_ != HeadMode::SoftmaxStar || coefficient == 0.0) return;
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  const Layer& out = layers_.back();
  const std::size_t base = output_offset();
  const Eigen::Index rows = out.weight.rows();
  for (Eigen::Index c = 0; c < out.weight.cols(); ++c) {
    grad[base + c * rows] += coefficient * sign(out.weight(0, c));
  }
  grad[base + out.weight.size()] += coefficient * sign(out.bias(0));
}

void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grad, double lr) {
  if (grad.size() != params.size()) {
    throw ConfigError("gradient length does not match parameters");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericalError("non-finite gradient entry");
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

}  // namespace spqrx
