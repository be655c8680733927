#pragma once

#include "spqrx/regression.hpp"
#include "spqrx/simulate.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace spqrx {

// Conditional quantile curve: fills out[k] = Q(taus[k] | x).
using QuantileCurve = std::function<void(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                         const std::vector<double>& taus,
                                         std::vector<double>& out)>;

QuantileCurve quantile_curve(const FittedModel& model);
QuantileCurve quantile_curve(const TrueModel& truth);

struct MetricReport {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;  // Monte-Carlo standard error across test rows
  double tau_lo = 0.0;
  double tau_hi = 1.0;
  Eigen::Index n_x = 0;
  int n_tau = 0;
};

inline constexpr int kIwdTauSamples = 2048;
inline constexpr int kTiwdTauSamples = 64;
inline constexpr Eigen::Index kTestCovariates = 5000;

// Monte-Carlo integrated 1-Wasserstein distance between two conditional
// quantile functions, averaged over the test rows and over tau uniform on
// (tau_lo, tau_hi). Each row uses `tau_samples` stratified draws
// tau_lo + (tau_hi - tau_lo) (k + U_k) / tau_samples from its own stream
// derive_seed(seed, row). The reported value is the average over tau,
// i.e. the double integral divided by (tau_hi - tau_lo).
MetricReport iwd(const QuantileCurve& truth, const QuantileCurve& model,
                 const Eigen::MatrixXd& test_x, int tau_samples = kIwdTauSamples,
                 double tau_lo = 0.0, double tau_hi = 1.0, std::uint64_t seed = 1,
                 int threads = 1, const std::string& name = "IWD");
MetricReport tiwd(const QuantileCurve& truth, const QuantileCurve& model,
                  const Eigen::MatrixXd& test_x, std::uint64_t seed = 1,
                  int threads = 1);

struct PitResult {
  std::vector<double> u;
  // Rows whose PIT is exactly 1 (SPQR evaluated above the training maximum).
  std::vector<Eigen::Index> degenerate;
};

PitResult pit(const FittedModel& model, const Dataset& test, int threads = 1);

// Sorted empirical coordinates against theoretical plotting positions.
struct DiagnosticPoints {
  std::vector<double> theoretical;
  std::vector<double> empirical;
  std::size_t excluded = 0;  // infinite points removed (u = 1 on exponential margins)
};

// Uniform margins: sorted u against i/(n+1).
DiagnosticPoints pp_points(const std::vector<double>& u);
// Exponential margins: sorted -log(1-u) against -log(1 - i/(n+1)); u >= 1
// values are excluded and counted.
DiagnosticPoints qq_exponential(const std::vector<double>& u);

// Kolmogorov-Smirnov distance of a sample from Unif(0, 1).
double ks_uniform(std::vector<double> u);
// Asymptotic 95% critical value 1.36 / sqrt(n).
double ks_critical_95(std::size_t n);

using FitProcedure = std::function<FittedModel(const Dataset&, std::uint64_t seed)>;

struct BootstrapResult {
  std::vector<std::shared_ptr<const FittedModel>> models;  // null where the refit failed
  std::vector<std::string> errors;                         // per replicate, empty on success
  std::size_t failures = 0;
};

// Resamples rows with replacement (stream derive_seed(seed, 1000 + b)) and
// refits with seed derive_seed(seed, b), so every replicate draws a fresh
// validation split. Failed refits are recorded, not fatal.
BootstrapResult bootstrap(const Dataset& train, const FitProcedure& fit, int n_boot,
                          std::uint64_t seed, int threads = 1);

struct IntervalTable {
  double level = 0.95;
  std::vector<double> lower, median, upper;
  std::size_t replicates = 0;
};

// Percentile intervals (type-7 quantiles) of vector-valued functionals over
// the successful replicates.
using ModelFunctional = std::function<std::vector<double>(const FittedModel&)>;
IntervalTable percentile_intervals(const BootstrapResult& boot,
                                   const ModelFunctional& functional,
                                   double level = 0.95);


// ------------------------------------------------------------ benchmark

// One simulation experiment: simulate a training set, fit SPQR and SPQRx
// (SPQRx warm-started from the SPQR fit, or both chosen by grid search),
// and score both against the truth on fresh test covariates.
struct BenchSettings {
  Design design = Design::Lognormal;
  Eigen::Index n = 10000;
  Architecture arch;
  BlendSpec blend{0.9, 0.99, 25.0, 5.0};
  TrainingConfig training;
  std::optional<GridSpec> grid;
  Eigen::Index test_covariates = kTestCovariates;
  int tau_samples = kIwdTauSamples;
};

struct ReplicateResult {
  int replicate = 0;
  MetricReport iwd_spqr, tiwd_spqr, iwd_spqrx, tiwd_spqrx;
  std::shared_ptr<const FittedModel> spqr, spqrx;
  Dataset train;
};

// Replicate r uses the stream s = derive_seed(seed, r): data seed
// derive_seed(s, 1), training seed derive_seed(s, 2), test covariates
// derive_seed(s, 3), IWD and tIWD tau draws derive_seed(s, 4) and (s, 5).
ReplicateResult bench_replicate(const BenchSettings& settings, std::uint64_t seed,
                                int replicate, int threads = 1);

// Type-7 sample quantile (linear interpolation between order statistics).
double sample_quantile(std::vector<double> values, double p);

}  // namespace spqrx
