#pragma once

#include <Eigen/Core>

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace spqrx {

inline constexpr int kMaxSplineOrder = 8;

// Basis values at a single point, restricted to the `order` functions whose
// support can contain it: entries refer to indices first, ..., first+order-1.
// Functions below `first` have I_k(y) = 1 and M_k(y) = 0; functions past the
// window have I_k(y) = M_k(y) = 0. Points left of 0 report first = 0 with an
// empty window, points right of 1 report first = K.
struct LocalBasis {
  int first = 0;
  int count = 0;
  std::array<double, kMaxSplineOrder> m{};
  std::array<double, kMaxSplineOrder> dm{};
  std::array<double, kMaxSplineOrder> i{};
};

// M-spline / I-spline basis of order d (piecewise polynomials of degree d-1)
// with K functions on [0, 1].
//
// Knot convention: the sequence t_0 <= ... <= t_{K+d-1} holds 0 repeated d
// times, K-d strictly increasing interior knots, and 1 repeated d times.
// M_k is supported on (t_k, t_{k+d}) and integrates to one; I_k is its
// integral from 0. Evaluation is right-continuous at interior knots and
// left-continuous at y = 1.
class SplineBasis {
 public:
  SplineBasis(int num_basis, int order, std::vector<double> interior_knots);

  // Interior knots at the empirical quantiles (linear interpolation between
  // order statistics) of `sample` at levels i/(K-d+1), i = 1..K-d. Tied
  // quantiles are spread across the adjacent knot gap with a warning.
  static SplineBasis from_sample(int num_basis, int order,
                                 std::span<const double> sample);

  int num_basis() const { return num_basis_; }
  int order() const { return order_; }
  const std::vector<double>& knots() const { return knots_; }
  std::vector<double> interior_knots() const;

  // Unchecked evaluation of the local window; y may lie outside [0, 1].
  LocalBasis local(double y) const;

  // Single-function evaluation; k is 0-based, y must lie in [0, 1].
  double mspline(int k, double y) const;
  double mspline_deriv(int k, double y) const;
  double ispline(int k, double y) const;

  // K x n matrices of M_k(y_j) and I_k(y_j).
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> basis_matrices(
      std::span<const double> ys) const;

 private:
  void check_args(int k, double y) const;

  int num_basis_;
  int order_;
  std::vector<double> knots_;      // length K + d
  std::vector<double> augmented_;  // knots_ with one extra 0 and 1 (order d+1)
};

}  // namespace spqrx
