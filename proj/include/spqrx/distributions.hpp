#pragma once

#include "spqrx/dual.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace spqrx {

// Below this |xi| the generalised Pareto expressions switch to their
// second-order expansions about xi = 0.
inline constexpr double kXiEps = 1e-7;

// Generalised Pareto distribution above `threshold`.
struct GPParams {
  double threshold = 0.0;
  double scale = 1.0;
  double shape = 0.0;

  // Finite upper endpoint when shape < 0, +inf otherwise.
  double upper_endpoint() const;
};

double gp_cdf(double y, const GPParams& gp);
double gp_survival(double y, const GPParams& gp);
double gp_pdf(double y, const GPParams& gp);
double gp_log_pdf(double y, const GPParams& gp);
double gp_quantile(double tau, const GPParams& gp);

// Hyper-parameters of the Beta(c1, c2) blending weight and the blending
// interval levels p_a < p_b. Fixed before training.
class BlendSpec {
 public:
  BlendSpec(double p_a, double p_b, double c1, double c2 = 5.0);

  double p_a() const { return p_a_; }
  double p_b() const { return p_b_; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }
  double log1m_pa() const { return log1m_pa_; }
  double log1m_pb() const { return log1m_pb_; }

  // Beta(c1, c2) distribution function, density and density derivative on
  // the unit interval.
  double weight_unit(double z) const;
  double weight_density_unit(double z) const;
  double weight_density_deriv_unit(double z) const;

 private:
  double p_a_, p_b_, c1_, c2_;
  double log1m_pa_, log1m_pb_, log_beta_;
};

// Blending interval [a, b] and the matched GP threshold and scale.
struct BlendGeometry {
  double a = 0.0;
  double b = 1.0;
  double u_tilde = 0.0;
  double sigma_tilde = 1.0;
};

struct TailMatch {
  double sigma_tilde;
  double u_tilde;
};

double blend_weight(double y, const BlendGeometry& geom, const BlendSpec& spec);
double blend_weight_deriv(double y, const BlendGeometry& geom,
                          const BlendSpec& spec);

// GP threshold and scale with F_GP(a) = p_a and F_GP(b) = p_b.
TailMatch gp_match(double a, double b, const BlendSpec& spec, double xi);

// Distribution on the (scaled) response interval used for the bulk.
class BulkDistribution {
 public:
  virtual ~BulkDistribution() = default;
  virtual double cdf(double y) const = 0;
  virtual double pdf(double y) const = 0;
  virtual double quantile(double p) const = 0;
};

// Blended generalised Pareto distribution: the bulk distribution up to the
// matched threshold, the GP distribution above b, and the geometric blend
// F^(1-p) F_GP^p with Beta weight p in between.
class BlendedGP {
 public:
  BlendedGP(std::shared_ptr<const BulkDistribution> bulk, double xi,
            const BlendSpec& spec);

  const BlendGeometry& geometry() const { return geom_; }
  GPParams tail() const { return {geom_.u_tilde, geom_.sigma_tilde, xi_}; }
  double xi() const { return xi_; }
  const BlendSpec& spec() const { return spec_; }
  const BulkDistribution& bulk() const { return *bulk_; }

  double cdf(double y) const;
  double survival(double y) const;
  double pdf(double y) const;
  double log_pdf(double y) const;
  // Bulk quantile up to p_a, closed-form GP quantile from p_b, and a
  // bracketed root search on [a, b] in between.
  double quantile(double tau) const;

 private:
  std::shared_ptr<const BulkDistribution> bulk_;
  double xi_;
  BlendSpec spec_;
  BlendGeometry geom_;
};

double bgp_cdf(double y, const BulkDistribution& bulk, double xi,
               const BlendSpec& spec);
double bgp_pdf(double y, const BulkDistribution& bulk, double xi,
               const BlendSpec& spec);
double bgp_log_pdf(double y, const BulkDistribution& bulk, double xi,
                   const BlendSpec& spec);
double bgp_quantile(double tau, const BulkDistribution& bulk, double xi,
                    const BlendSpec& spec);

inline constexpr int kDefaultPenaltyGrid = 128;

// Riemann approximation of the integral of max(0, -h) over a grid of
// `grid_size` evenly spaced points covering [a, b] plus one cell either side.
double validity_penalty(const BulkDistribution& bulk, double xi,
                        const BlendSpec& spec,
                        int grid_size = kDefaultPenaltyGrid);

namespace detail {

// The blended-distribution formulas, generic over double and Dual<N> so that
// the likelihood and its gradient share one implementation.

// log1p(xi x) / xi, continuous through xi = 0.
template <class T>
T log1p_ratio(const T& xi, const T& x) {
  using std::log1p;
  if (std::fabs(value(xi)) < kXiEps) return x - 0.5 * (xi * x * x);
  return log1p(xi * x) / xi;
}

// expm1(xi x) / xi, continuous through xi = 0.
template <class T>
T expm1_ratio(const T& xi, double x) {
  using std::expm1;
  if (std::fabs(value(xi)) < kXiEps) return x + 0.5 * x * x * xi;
  return expm1(xi * x) / xi;
}

template <class T>
struct Tail {
  T u_tilde;
  T sigma_tilde;
};

// With g(p) = ((1-p)^(-xi) - 1) / xi the matched GP satisfies
// u + sigma g(p_a) = a and u + sigma g(p_b) = b.
template <class T>
Tail<T> match_tail(const T& a, const T& b, const T& xi, const BlendSpec& spec) {
  const T ga = expm1_ratio(xi, -spec.log1m_pa());
  const T gb = expm1_ratio(xi, -spec.log1m_pb());
  const T sigma = (b - a) / (gb - ga);
  return {a - sigma * ga, sigma};
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class T>
T gp_log_survival(const T& y, const Tail<T>& tail, const T& xi) {
  const T z = (y - tail.u_tilde) / tail.sigma_tilde;
  if (value(z) <= 0.0) return z * 0.0;
  if (1.0 + value(xi) * value(z) <= 0.0) return z * 0.0 + kNegInf;
  return -log1p_ratio(xi, z);
}

template <class T>
T log1m_exp(const T& x) {
  using std::expm1;
  using std::log;
  return log(-expm1(x));
}

template <class T>
T gp_log_density(const T& y, const Tail<T>& tail, const T& xi) {
  using std::log;
  const T z = (y - tail.u_tilde) / tail.sigma_tilde;
  if (value(z) < 0.0 || 1.0 + value(xi) * value(z) <= 0.0) {
    return z * 0.0 + kNegInf;
  }
  return (1.0 + xi) * gp_log_survival(y, tail, xi) - log(tail.sigma_tilde);
}

// Pieces of the blended density strictly inside (a, b):
// h = exp(log_cdf) * bracket.
template <class T>
struct MidBlend {
  T log_cdf;
  T bracket;
};

template <class T>
MidBlend<T> blend_mid(const T& y, const T& bulk_cdf, const T& bulk_pdf,
                      const T& a, const T& b, const Tail<T>& tail, const T& xi,
                      const BlendSpec& spec) {
  using std::exp;
  using std::log;
  const T width = b - a;
  const T z = (y - a) / width;
  const double zv = value(z);
  const T p = lift(z, spec.weight_unit(zv), spec.weight_density_unit(zv));
  const T dp = lift(z, spec.weight_density_unit(zv),
                    spec.weight_density_deriv_unit(zv)) /
               width;
  const T log_s = gp_log_survival(y, tail, xi);
  const T log_fgp_cdf = log1m_exp(log_s);
  const T log_fgp_pdf = (1.0 + xi) * log_s - log(tail.sigma_tilde);
  const T log_f = log(bulk_cdf);
  const T bracket = dp * (log_fgp_cdf - log_f) +
                    p * exp(log_fgp_pdf - log_fgp_cdf) +
                    (1.0 - p) * bulk_pdf / bulk_cdf;
  return {(1.0 - p) * log_f + p * log_fgp_cdf, bracket};
}

// Log density of the blended distribution given the bulk cdf and pdf at y.
// Below a the blend weight vanishes and the bulk density is returned as is.
template <class T>
T blended_log_density(const T& y, const T& bulk_cdf, const T& bulk_pdf,
                      const T& a, const T& b, const Tail<T>& tail, const T& xi,
                      const BlendSpec& spec) {
  using std::log;
  if (value(y) <= value(a)) return log(bulk_pdf);
  if (value(y) >= value(b)) return gp_log_density(y, tail, xi);
  const MidBlend<T> mid = blend_mid(y, bulk_cdf, bulk_pdf, a, b, tail, xi, spec);
  return mid.log_cdf + log(mid.bracket);
}

// Grid point g of the validity-penalty grid: spacing (b-a)/(G-3), starting
// one cell below a and ending one cell above b.
template <class T>
T penalty_cell(const T& a, const T& b, int grid_size) {
  return (b - a) / static_cast<double>(grid_size - 3);
}

}  // namespace detail

}  // namespace spqrx
