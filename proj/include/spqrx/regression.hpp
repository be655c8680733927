#pragma once

#include "spqrx/distributions.hpp"
#include "spqrx/network.hpp"
#include "spqrx/splines.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace spqrx {

// Covariates (one row per observation) and responses.
struct Dataset {
  Eigen::MatrixXd x;  // n x p
  Eigen::VectorXd y;  // n
  std::vector<std::string> names;  // covariate names, length p (may be empty)

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
  // Throws DataError on shape mismatch, non-finite values, or (when
  // require_positive) nonpositive responses.
  void validate(bool require_positive) const;
};

// Training-derived preprocessing constants. The response is optionally
// square-root transformed and then min-max scaled onto [0, 1]; covariates
// are z-scored column by column.
struct Scaling {
  double y_min = 0.0;
  double y_max = 1.0;
  bool sqrt_transform = false;
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_sd;
  std::vector<std::string> covariate_names;  // training column order

  // Constant columns keep sd = 1 (centred only) and trigger a warning.
  static Scaling fit(const Dataset& train, bool sqrt_transform);

  double scale_response(double y) const;
  double unscale_response(double s) const;
  // d scale_response / dy.
  double response_jacobian(double y) const;
  Eigen::VectorXd scale_responses(const Eigen::VectorXd& y) const;
  Eigen::RowVectorXd normalize_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::MatrixXd normalize(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

// Mixture sum_k w_k M_k evaluated from a local basis window.
double mixture_cdf(const LocalBasis& lb, const double* w);
double mixture_pdf(const LocalBasis& lb, const double* w);
double mixture_pdf_deriv(const LocalBasis& lb, const double* w);
// Inverse of the mixture distribution function: binary search over a
// 512-point grid on [0, 1] followed by safeguarded Newton refinement.
double mixture_quantile(const SplineBasis& basis, const double* w, double tau);

inline constexpr int kQuantileGrid = 512;

// SPQR density on the scaled response: sum_k w_k M_k(y) with cdf
// sum_k w_k I_k(y). Zero density outside [0, 1].
class SplineMixture : public BulkDistribution {
 public:
  SplineMixture(std::shared_ptr<const SplineBasis> basis,
                Eigen::VectorXd weights);

  double cdf(double y) const override;
  double pdf(double y) const override;
  double quantile(double tau) const override;

  const SplineBasis& basis() const { return *basis_; }
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  std::shared_ptr<const SplineBasis> basis_;
  Eigen::VectorXd weights_;
};

// Conditional distribution of the scaled response at one covariate vector:
// the SPQR mixture alone, or its blend with a GP tail.
class ConditionalDistribution {
 public:
  explicit ConditionalDistribution(std::shared_ptr<const SplineMixture> bulk);
  ConditionalDistribution(std::shared_ptr<const SplineMixture> bulk, double xi,
                          const BlendSpec& spec);

  bool blended() const { return blend_.has_value(); }
  const SplineMixture& bulk() const { return *bulk_; }
  // Requires blended().
  const BlendedGP& blend() const;
  double xi() const;

  double cdf(double y) const;
  double survival(double y) const;
  double pdf(double y) const;
  double log_pdf(double y) const;
  double quantile(double tau) const;

 private:
  std::shared_ptr<const SplineMixture> bulk_;
  std::optional<BlendedGP> blend_;
};

enum class ModelMode { Spqr, Spqrx };
std::string to_string(ModelMode m);
ModelMode parse_model_mode(const std::string& s);

struct Architecture {
  int num_basis = 25;                 // K
  int order = 3;                      // spline order d
  std::vector<int> hidden{32, 32};    // widths of the hidden layers
  HiddenActivation activation = HiddenActivation::Sigmoid;
  XiActivation xi_activation = XiActivation::scaled_tanh(-0.5, 0.7);

  void validate() const;
};

struct TrainingConfig {
  double learning_rate = 1e-3;
  int max_epochs = 1000;
  int patience = 25;
  double validation_fraction = 0.2;
  double density_penalty = 100.0;  // lambda
  double l1_xi = 1e-4;
  std::uint64_t seed = 1;
  int batch_size = 0;  // 0 = full batch
  double lr_decay = 0.5;
  int max_restarts = 5;
  int penalty_grid = kDefaultPenaltyGrid;
  double xi_init = 0.2;
  bool sqrt_transform = false;

  void validate() const;
  // Canonical text form used for fingerprinting.
  std::string canonical() const;
};

struct EpochRecord {
  std::string phase;  // "spqr", "warmup" or "spqrx"
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  int restarts = 0;
};

struct TrainingSummary {
  std::uint64_t seed = 0;
  std::string config_hash;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double final_train_loss = 0.0;
  int restarts = 0;
  std::size_t n_train = 0;
  std::vector<EpochRecord> log;
};

// Trained SPQR or SPQRx model. Immutable after training and safe for
// concurrent prediction. Covariates and responses passed to the methods
// below are on the original scale.
class FittedModel {
 public:
  FittedModel(ModelMode mode, std::shared_ptr<const SplineBasis> basis,
              Network network, std::optional<BlendSpec> blend, Scaling scaling);

  ModelMode mode() const { return mode_; }
  const SplineBasis& basis() const { return *basis_; }
  std::shared_ptr<const SplineBasis> basis_ptr() const { return basis_; }
  const Network& network() const { return network_; }
  const std::optional<BlendSpec>& blend() const { return blend_; }
  const Scaling& scaling() const { return scaling_; }
  TrainingSummary& training() { return training_; }
  const TrainingSummary& training() const { return training_; }

  NetworkOutput outputs(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  ConditionalDistribution conditional(
      const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  // One conditional distribution per row of x (batched network pass).
  std::vector<ConditionalDistribution> conditionals(
      const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  // xi(x); throws ConfigError for SPQR models.
  double xi(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd xi_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  double cdf(const Eigen::Ref<const Eigen::RowVectorXd>& x, double y) const;
  double density(const Eigen::Ref<const Eigen::RowVectorXd>& x, double y) const;
  double quantile(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                  double tau) const;

 private:
  ModelMode mode_;
  std::shared_ptr<const SplineBasis> basis_;
  Network network_;
  std::optional<BlendSpec> blend_;
  Scaling scaling_;
  TrainingSummary training_;
};

// Scaled-response evaluators. The SPQR versions use the bulk mixture even
// for SPQRx models; the SPQRx versions require an SPQRx model.
double spqr_density(const FittedModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double y);
double spqr_cdf(const FittedModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double y);
double spqr_quantile(const FittedModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double tau);
double spqrx_density(const FittedModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double y);
double spqrx_cdf(const FittedModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double y);
double spqrx_quantile(const FittedModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double tau);

struct LossTerms {
  double nll = 0.0;      // -sum log h
  double penalty = 0.0;  // sum of validity penalties (before lambda)
  double l1 = 0.0;       // L1 term (already multiplied by its coefficient)
};

// Penalized negative log-likelihood of a network on scaled data. Without a
// blend spec it is the SPQR likelihood -sum log f_SPQR.
class Objective {
 public:
  Objective(std::shared_ptr<const SplineBasis> basis,
            std::optional<BlendSpec> blend, double density_penalty,
            double l1_xi, int penalty_grid = kDefaultPenaltyGrid);

  // x holds normalized covariates, one observation per column; y the scaled
  // responses. Returns sum_i [-log h(y_i|x_i) + lambda * penalty_i] plus the
  // L1 term, or with `mean` the batch average of the bracketed term plus the
  // L1 term. Training passes l1_xi / n_train so that the mean form is the
  // summed objective divided by the training size. The gradient (flatten()
  // order) is written when requested. Non-finite values are returned as-is,
  // never thrown.
  double evaluate(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& y, bool mean,
                  std::vector<double>* grad = nullptr,
                  LossTerms* terms = nullptr) const;

  bool blended() const { return blend_.has_value(); }

  // The same objective reduced to lambda * validity penalty: no likelihood
  // and no L1 term. Requires a blend spec.
  Objective penalty_only() const;

  struct PenaltyNode {
    double z, p, dp;  // unit position, Beta cdf and density there
  };

 private:
  std::shared_ptr<const SplineBasis> basis_;
  std::optional<BlendSpec> blend_;
  double lambda_;
  double l1_;
  int grid_;
  bool likelihood_ = true;
  std::vector<PenaltyNode> nodes_;
};

// Penalized loss (summed over rows) of a fitted model on raw data.
double nll_loss(const FittedModel& model, const Dataset& batch,
                const TrainingConfig& config);

// Seeded split of row indices into (training, validation).
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
validation_split(Eigen::Index n, double fraction, std::uint64_t seed);

FittedModel fit_spqr(const Dataset& train, const Architecture& arch,
                     const TrainingConfig& config);
// Pre-trains an SPQR model and then trains the SPQRx model from it.
FittedModel fit_spqrx(const Dataset& train, const Architecture& arch,
                      const BlendSpec& blend, const TrainingConfig& config);
// SPQRx training warm-started from an SPQR model fitted to the same data
// with the same configuration.
FittedModel fit_spqrx_from(const Dataset& train, const FittedModel& pretrained,
                           const XiActivation& xi_activation,
                           const BlendSpec& blend, const TrainingConfig& config);

struct GridSpec {
  std::vector<int> num_basis{25};
  std::vector<int> hidden_width{32};
  int hidden_layers = 2;
  std::vector<HiddenActivation> activation{HiddenActivation::Sigmoid};
  std::vector<double> p_a{0.9};
  std::vector<double> p_b{0.99};
  std::vector<double> c1{25.0};
  double c2 = 5.0;

  std::size_t cells(ModelMode mode) const;
};

struct GridRow {
  Architecture arch;
  std::optional<BlendSpec> blend;
  double score = 0.0;
  bool failed = false;
  std::string error;
  TrainingSummary training;  // empty when the cell failed
};

struct GridResult {
  std::vector<GridRow> table;
  std::size_t best_index = 0;
  std::shared_ptr<const FittedModel> best;
};

// Fits every grid cell and ranks them by `score` (lower is better; the
// default is the best validation loss). SPQRx cells sharing a bulk
// architecture share one pre-trained SPQR fit.
using ModelScore = std::function<double(const FittedModel&)>;
GridResult grid_search(const Dataset& train, ModelMode mode,
                       const GridSpec& grid, const Architecture& base,
                       const TrainingConfig& config, const ModelScore& score = {},
                       int threads = 1);

}  // namespace spqrx
