#pragma once

#include "spqrx/regression.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace spqrx {

// Accumulated local effects of covariate j on a scalar model function g.
//
// Bin edges are type-1 empirical quantiles of column j at levels q/bins,
// with duplicates removed (empty bins merge into their neighbour). Each
// row contributes g(x with x_j = upper edge) - g(x with x_j = lower edge)
// to its bin; the accumulated sums start at 0 on the lowest edge. The ALE
// curve is the piecewise-linear interpolation of the accumulated sums minus
// `offset`, the mean of that interpolation over the observed x_j.
struct ALEProfile {
  int covariate = 0;
  std::vector<double> edges;    // strictly increasing
  std::vector<double> effects;  // accumulated, effects[0] = 0
  std::vector<int> counts;      // rows per bin (edges.size() - 1 entries)
  double offset = 0.0;

  // Centred ALE at x_j (linear interpolation, constant beyond the edges).
  double value(double xj) const;
  std::vector<double> centered_effects() const;
};

// g evaluated on every row of a matrix; returns rows x outputs.
using BatchFunction = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

// One profile per output column of g.
std::vector<ALEProfile> ale_multi(const BatchFunction& g, const Eigen::MatrixXd& data,
                                  int j, int bins = 40);
ALEProfile ale(const std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)>& g,
               const Eigen::MatrixXd& data, int j, int bins = 40);

// Population standard deviation of the centred ALE over the observed x_j.
double vi_score(const ALEProfile& profile, const Eigen::Ref<const Eigen::VectorXd>& column);

// VI scores: one row per tau (a single row for xi), one column per covariate.
struct VIResult {
  std::vector<double> taus;  // empty for xi
  Eigen::MatrixXd scores;
  std::vector<ALEProfile> profiles;  // row-major over (tau, covariate)
};

inline const std::vector<double> kDefaultVITaus{0.05, 0.1, 0.2, 0.3, 0.4, 0.5,
                                                0.6, 0.7, 0.8, 0.9, 0.95};

// g(x) = conditional tau-quantile on the original response scale.
VIResult vi_quantile_profile(const FittedModel& model, const Eigen::MatrixXd& data,
                             const std::vector<double>& taus, int bins = 40,
                             int threads = 1);
// g(x) = xi(x); SPQRx models only.
VIResult vi_xi(const FittedModel& model, const Eigen::MatrixXd& data, int bins = 40,
               int threads = 1);

}  // namespace spqrx
