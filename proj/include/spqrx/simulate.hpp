#pragma once

#include "spqrx/regression.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace spqrx {

// Simulation designs with known conditional quantile functions:
//   Lognormal  (p = 3):  log Y ~ N(mu(x), sigma(x)^2), s = logistic(1 - 5 x1 x2),
//                        mu = 5 (1 - s), sigma = s; only x1 and x2 act.
//   Lomax      (p = 20): survival (1 + y)^(-alpha(x)), alpha = 3 + exp(beta0(x) - 1).
//   BoundedGP  (p = 20): GP(threshold 0, scale 1, shape xi(x)),
//                        xi = -1 / (1 + exp(-beta0(x))) in (-1, 0).
// Covariates are i.i.d. Unif(0, 1); responses are drawn by inversion.
enum class Design { Lognormal, Lomax, BoundedGP };

std::string to_string(Design d);
Design parse_design(const std::string& s);
int design_dim(Design d);

// Nonlinear index over x1..x10 driving both appendix designs.
double beta0(const Eigen::Ref<const Eigen::RowVectorXd>& x);

// Exact conditional distribution of a design.
class TrueModel {
 public:
  explicit TrueModel(Design design) : design_(design) {}

  Design design() const { return design_; }
  double quantile(const Eigen::Ref<const Eigen::RowVectorXd>& x, double tau) const;
  double cdf(const Eigen::Ref<const Eigen::RowVectorXd>& x, double y) const;

  // Design parameters at x.
  static double lognormal_mu(const Eigen::Ref<const Eigen::RowVectorXd>& x);
  static double lognormal_sigma(const Eigen::Ref<const Eigen::RowVectorXd>& x);
  static double lomax_alpha(const Eigen::Ref<const Eigen::RowVectorXd>& x);
  static double bounded_xi(const Eigen::Ref<const Eigen::RowVectorXd>& x);

 private:
  Design design_;
};

struct SimSpec {
  Design design = Design::Lognormal;
  Eigen::Index n = 1000;
  std::uint64_t seed = 1;
};

struct Simulated {
  Dataset data;
  TrueModel truth;
};

// Uniform covariates, drawn row by row from derive_seed(seed, 11).
Eigen::MatrixXd sample_covariates(int p, Eigen::Index n, std::uint64_t seed);
// Responses by inversion with uniforms from derive_seed(seed, 12).
Eigen::VectorXd sample_responses(const TrueModel& truth, const Eigen::MatrixXd& x,
                                 std::uint64_t seed);

Simulated simulate(const SimSpec& spec);
Simulated gen_lognormal(Eigen::Index n, std::uint64_t seed);
Simulated gen_lomax(Eigen::Index n, std::uint64_t seed);
Simulated gen_gp_bounded(Eigen::Index n, std::uint64_t seed);

}  // namespace spqrx
