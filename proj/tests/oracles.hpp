#pragma once

// Independent reference computations shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

// Composite Simpson rule with `panels` (even) panels on [lo, hi].
inline double simpson(const std::function<double(double)>& f, double lo, double hi,
                      int panels = 4096) {
  if (panels % 2 != 0) ++panels;
  const double h = (hi - lo) / panels;
  double s = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

// Simpson on each interval between consecutive distinct breakpoints, so
// piecewise polynomials are integrated without straddling a kink. The
// panels are evaluated strictly inside each piece (endpoints nudged inward)
// to respect one-sided definitions at the breaks.
inline double simpson_pieces(const std::function<double(double)>& f,
                             std::vector<double> breaks, int panels_per_piece = 4096) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = breaks[i], hi = breaks[i + 1];
    const double eps = 1e-14 * std::max(1.0, std::fabs(hi));
    total += simpson(f, lo + eps, hi - eps, panels_per_piece);
  }
  return total;
}

inline double central_difference(const std::function<double(double)>& f, double x,
                                 double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-12) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

}  // namespace oracle
