#include "spqrx/special.hpp"

#include "spqrx/error.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>

namespace spqrx {

namespace {

constexpr double kCfTolerance = 1e-16;
constexpr int kCfMaxIterations = 2000;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a, b) / (x^a (1-x)^b / (a B(a, b))); converges
// rapidly for x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double x, double a, double b) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kCfMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kCfTolerance) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double beta_cdf(double x, double a, double b) {
  return beta_cdf(x, a, b, log_beta(a, b));
}

double beta_cdf(double x, double a, double b, double log_beta_ab) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ConfigError("beta_cdf: shape parameters must be positive");
  }
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta_ab);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double beta_pdf(double x, double a, double b, double log_beta_ab) {
  if (!(x > 0.0) || !(x < 1.0)) {
    // Boundary values only matter for shapes <= 1, which the blending
    // weight never uses (c1, c2 > 3).
    if (x == 0.0 && a == 1.0) return std::exp(-log_beta_ab);
    if (x == 1.0 && b == 1.0) return std::exp(-log_beta_ab);
    return 0.0;
  }
  return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
                  log_beta_ab);
}

double beta_pdf_deriv(double x, double a, double b, double log_beta_ab) {
  if (!(x > 0.0) || !(x < 1.0)) return 0.0;
  return beta_pdf(x, a, b, log_beta_ab) *
         ((a - 1.0) / x - (b - 1.0) / (1.0 - x));
}

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ConfigError("normal_quantile: probability outside [0, 1]");
  }
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

}  // namespace spqrx
