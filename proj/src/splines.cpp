#include "spqrx/splines.hpp"

#include "spqrx/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spqrx {

namespace {

double quantile_type7(const std::vector<double>& sorted, double level) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Spreads runs of equal values in {0, interior..., 1} across the neighbouring
// gap so that the sequence becomes strictly increasing. Returns true when
// anything moved.
bool separate_ties(std::vector<double>& interior) {
  std::vector<double> s;
  s.reserve(interior.size() + 2);
  s.push_back(0.0);
  s.insert(s.end(), interior.begin(), interior.end());
  s.push_back(1.0);
  for (double& v : s) v = std::clamp(v, 0.0, 1.0);

  bool moved = false;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
    const std::size_t run = j - i + 1;
    if (run > 1) {
      moved = true;
      const double v = s[i];
      if (j + 1 < s.size()) {
        const double next = s[j + 1];
        for (std::size_t r = 0; r < run; ++r) {
          s[i + r] = v + (next - v) * static_cast<double>(r) /
                             static_cast<double>(run);
        }
      } else {
        // Run touching the upper boundary: spread downwards, keep 1 fixed.
        const double prev = i > 0 ? s[i - 1] : 0.0;
        for (std::size_t r = 0; r < run; ++r) {
          s[j - r] = v - (v - prev) * static_cast<double>(r) /
                             static_cast<double>(run);
        }
      }
    }
    i = j + 1;
  }
  std::copy(s.begin() + 1, s.end() - 1, interior.begin());
  return moved;
}

}  // namespace

SplineBasis::SplineBasis(int num_basis, int order,
                         std::vector<double> interior_knots)
    : num_basis_(num_basis), order_(order) {
  if (order < 1 || order > kMaxSplineOrder - 1) {
    throw ConfigError("spline order must lie in [1, " +
                      std::to_string(kMaxSplineOrder - 1) + "]");
  }
  if (num_basis < order) {
    throw ConfigError("number of basis functions must be at least the order");
  }
  if (static_cast<int>(interior_knots.size()) != num_basis - order) {
    throw ConfigError("expected K - d interior knots");
  }
  double prev = 0.0;
  for (double t : interior_knots) {
    if (!(t > prev) || !(t < 1.0)) {
      throw ConfigError("interior knots must be strictly increasing in (0, 1)");
    }
    prev = t;
  }
  knots_.assign(order, 0.0);
  knots_.insert(knots_.end(), interior_knots.begin(), interior_knots.end());
  knots_.insert(knots_.end(), order, 1.0);

  augmented_.reserve(knots_.size() + 2);
  augmented_.push_back(0.0);
  augmented_.insert(augmented_.end(), knots_.begin(), knots_.end());
  augmented_.push_back(1.0);
}

SplineBasis SplineBasis::from_sample(int num_basis, int order,
                                     std::span<const double> sample) {
  if (sample.empty()) throw DataError("knot placement needs a nonempty sample");
  if (order < 1) throw ConfigError("spline order must be positive");
  if (num_basis < order) {
    throw ConfigError("number of basis functions must be at least the order");
  }
  std::vector<double> sorted(sample.begin(), sample.end());
  for (double v : sorted) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError("knot placement sample must lie in [0, 1]");
    }
  }
  std::sort(sorted.begin(), sorted.end());

  const int interior_count = num_basis - order;
  std::vector<double> interior(interior_count);
  for (int i = 0; i < interior_count; ++i) {
    const double level =
        static_cast<double>(i + 1) / static_cast<double>(interior_count + 1);
    interior[i] = quantile_type7(sorted, level);
  }
  if (separate_ties(interior)) {
    warn("tied empirical quantiles produced coincident knots; spread apart");
  }
  return SplineBasis(num_basis, order, std::move(interior));
}

std::vector<double> SplineBasis::interior_knots() const {
  return {knots_.begin() + order_, knots_.begin() + num_basis_};
}

LocalBasis SplineBasis::local(double y) const {
  LocalBasis out;
  const int d = order_;
  if (!(y >= 0.0)) return out;  // also NaN
  if (y > 1.0) {
    out.first = num_basis_;
    return out;
  }
  // Span j with t_j <= y < t_{j+1}, restricted to the nonempty spans.
  const auto it = std::upper_bound(knots_.begin() + d,
                                   knots_.begin() + num_basis_, y);
  const int j = static_cast<int>(it - knots_.begin()) - 1;
  const int first = j - d + 1;
  out.first = first;
  out.count = d;

  // M-spline recursion, built up from order 1. Offset o addresses
  // k = first + o; at order r the nonzero entries are o = d-r .. d-1.
  std::array<double, kMaxSplineOrder> cur{};
  std::array<double, kMaxSplineOrder> lower{};
  cur[d - 1] = 1.0 / (knots_[j + 1] - knots_[j]);
  for (int r = 2; r <= d; ++r) {
    if (r == d) lower = cur;
    for (int o = d - r; o < d; ++o) {
      const int k = first + o;
      const double left = (o >= d - r + 1) ? cur[o] : 0.0;
      const double right = (o + 1 < d) ? cur[o + 1] : 0.0;
      const double tk = knots_[k];
      const double tkr = knots_[k + r];
      cur[o] = r * ((y - tk) * left + (tkr - y) * right) /
               ((r - 1) * (tkr - tk));
    }
  }
  out.m = cur;
  if (d > 1) {
    for (int o = 0; o < d; ++o) {
      const int k = first + o;
      const double left = (o >= 1) ? lower[o] : 0.0;
      const double right = (o + 1 < d) ? lower[o + 1] : 0.0;
      out.dm[o] = d * (left - right) / (knots_[k + d] - knots_[k]);
    }
  }

  // Order d+1 B-splines on the augmented knots (Cox-de Boor, span j+1);
  // I_k is the tail sum of those from index k+1 on.
  const int p = d;
  const int s = j + 1;
  std::array<double, kMaxSplineOrder + 1> n{};
  std::array<double, kMaxSplineOrder + 1> left{};
  std::array<double, kMaxSplineOrder + 1> right{};
  n[0] = 1.0;
  for (int r = 1; r <= p; ++r) {
    left[r] = y - augmented_[s + 1 - r];
    right[r] = augmented_[s + r] - y;
    double saved = 0.0;
    for (int q = 0; q < r; ++q) {
      const double temp = n[q] / (right[q + 1] + left[r - q]);
      n[q] = saved + right[q + 1] * temp;
      saved = left[r - q] * temp;
    }
    n[r] = saved;
  }
  double tail = 0.0;
  for (int o = d - 1; o >= 0; --o) {
    tail += n[o + 1];
    out.i[o] = std::min(tail, 1.0);
  }
  return out;
}

void SplineBasis::check_args(int k, double y) const {
  if (k < 0 || k >= num_basis_) {
    throw std::out_of_range("spline basis index out of range");
  }
  if (!(y >= 0.0 && y <= 1.0)) {
    throw DataError("spline evaluation point outside [0, 1]");
  }
}

double SplineBasis::mspline(int k, double y) const {
  check_args(k, y);
  const LocalBasis b = local(y);
  const int o = k - b.first;
  return (o >= 0 && o < b.count) ? b.m[o] : 0.0;
}

double SplineBasis::mspline_deriv(int k, double y) const {
  check_args(k, y);
  const LocalBasis b = local(y);
  const int o = k - b.first;
  return (o >= 0 && o < b.count) ? b.dm[o] : 0.0;
}

double SplineBasis::ispline(int k, double y) const {
  check_args(k, y);
  const LocalBasis b = local(y);
  const int o = k - b.first;
  if (o < 0) return 1.0;
  return o < b.count ? b.i[o] : 0.0;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> SplineBasis::basis_matrices(
    std::span<const double> ys) const {
  const Eigen::Index n = static_cast<Eigen::Index>(ys.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(num_basis_, n);
  Eigen::MatrixXd in = Eigen::MatrixXd::Zero(num_basis_, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double y = ys[static_cast<std::size_t>(c)];
    if (!(y >= 0.0 && y <= 1.0)) {
      std::ostringstream msg;
      msg << "spline evaluation point " << y << " (entry " << c
          << ") outside [0, 1]";
      throw DataError(msg.str());
    }
    const LocalBasis b = local(y);
    for (int k = 0; k < b.first; ++k) in(k, c) = 1.0;
    for (int o = 0; o < b.count; ++o) {
      m(b.first + o, c) = b.m[o];
      in(b.first + o, c) = b.i[o];
    }
  }
  return {std::move(m), std::move(in)};
}

}  // namespace spqrx
