#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace spqrx {

enum class HiddenActivation { Sigmoid, Relu };
enum class HeadMode { Softmax, SoftmaxStar };

std::string to_string(HiddenActivation a);
std::string to_string(HeadMode h);
HiddenActivation parse_hidden_activation(const std::string& s);
HeadMode parse_head_mode(const std::string& s);

// Activation applied to the xi output of the softmax* head.
//   ScaledTanh:  lo + (hi - lo) (tanh(z) + 1) / 2, range (lo, hi)
//   Logistic:    lo + (hi - lo) / (1 + exp(-z)),   range (lo, hi)
//   Exponential: lo + exp(z),                      range (lo, inf)
struct XiActivation {
  enum class Kind { ScaledTanh, Logistic, Exponential };
  Kind kind = Kind::ScaledTanh;
  double lo = -0.5;
  double hi = 0.7;

  static XiActivation scaled_tanh(double lo, double hi);
  static XiActivation logistic(double lo = 0.0, double hi = 1.0);
  static XiActivation exponential(double lo = 0.0);

  void validate() const;
  double apply(double z) const;
  double deriv(double z) const;
  // Pre-activation giving `xi`; xi must lie strictly inside the range.
  double inverse(double xi) const;
  bool bounded_above() const { return kind != Kind::Exponential; }
};

std::string to_string(XiActivation::Kind k);
XiActivation::Kind parse_xi_kind(const std::string& s);

struct Layer {
  Eigen::MatrixXd weight;  // n_out x n_in
  Eigen::VectorXd bias;    // n_out
};

struct NetworkOutput {
  double xi = 0.0;              // meaningful for SoftmaxStar only
  Eigen::VectorXd weights;      // K mixture weights
};

// Intermediate values of a batched forward pass, kept for backpropagation.
// Observations are stored as columns.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // input, then each hidden layer
  Eigen::MatrixXd xi_pre;                    // 1 x n (SoftmaxStar only)
  Eigen::MatrixXd weights;                   // K x n
  Eigen::VectorXd xi;                        // n (SoftmaxStar only)
};

// Multi-layer perceptron with H hidden layers and a softmax (SPQR) or
// softmax* (SPQRx) head. In softmax* mode output row 0 feeds the xi
// activation and rows 1..K the softmax; otherwise rows 0..K-1 are logits.
class Network {
 public:
  Network() = default;
  Network(int input_dim, std::vector<int> hidden, int num_basis,
          HiddenActivation hidden_act, HeadMode head, XiActivation xi_act);

  // Glorot-uniform weights and zero biases from a seeded generator. In
  // softmax* mode the xi row starts at zero weight with its bias set so
  // that xi(x) = xi_init for every x.
  static Network initialize(int input_dim, const std::vector<int>& hidden,
                            int num_basis, HiddenActivation hidden_act,
                            HeadMode head, XiActivation xi_act,
                            std::uint64_t seed, double xi_init = 0.2);

  // Copy of this softmax network with a xi row prepended to the output
  // layer (zero weights, bias giving xi(x) = xi_init).
  Network with_xi_head(XiActivation xi_act, double xi_init = 0.2) const;

  int input_dim() const { return input_dim_; }
  int num_basis() const { return num_basis_; }
  const std::vector<int>& hidden() const { return hidden_; }
  HiddenActivation hidden_activation() const { return hidden_act_; }
  HeadMode head() const { return head_; }
  const XiActivation& xi_activation() const { return xi_act_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::size_t num_params() const;
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);

  NetworkOutput forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // x holds one observation per column.
  ForwardCache forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  // Gradient of a batch loss with respect to all parameters, in flatten()
  // order, given dL/dxi (length n; ignored in softmax mode) and dL/dw (K x n).
  std::vector<double> backward(const ForwardCache& cache,
                               const Eigen::VectorXd& grad_xi,
                               const Eigen::MatrixXd& grad_w) const;

  // coefficient * sum of |entries| of the output-layer xi row and its bias.
  double l1_penalty(double coefficient) const;
  // Adds the L1 subgradient (zero at zero) to a flat gradient.
  void add_l1_gradient(double coefficient, std::vector<double>& grad) const;

 private:
  void check_dims() const;
  std::size_t output_offset() const;

  int input_dim_ = 0;
  std::vector<int> hidden_;
  int num_basis_ = 0;
  HiddenActivation hidden_act_ = HiddenActivation::Sigmoid;
  HeadMode head_ = HeadMode::Softmax;
  XiActivation xi_act_;
  std::vector<Layer> layers_;
};

// Adam optimizer state over a flat parameter vector.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update; throws NumericalError on non-finite
// gradient entries.
void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grad, double lr);

}  // namespace spqrx
