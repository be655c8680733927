#include "spqrx/distributions.hpp"

#include "spqrx/error.hpp"
#include "spqrx/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace spqrx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxRootIterations = 200;

void check_gp(const GPParams& gp) {
  if (!(gp.scale > 0.0)) throw ConfigError("GP scale must be positive");
}

detail::Tail<double> as_tail(const GPParams& gp) {
  return {gp.threshold, gp.scale};
}

}  // namespace

double GPParams::upper_endpoint() const {
  return shape < 0.0 ? threshold - scale / shape : kInf;
}

double gp_survival(double y, const GPParams& gp) {
  check_gp(gp);
  return std::exp(detail::gp_log_survival(y, as_tail(gp), gp.shape));
}

double gp_cdf(double y, const GPParams& gp) {
  check_gp(gp);
  return -std::expm1(detail::gp_log_survival(y, as_tail(gp), gp.shape));
}

double gp_log_pdf(double y, const GPParams& gp) {
  check_gp(gp);
  return detail::gp_log_density(y, as_tail(gp), gp.shape);
}

double gp_pdf(double y, const GPParams& gp) {
  return std::exp(gp_log_pdf(y, gp));
}

double gp_quantile(double tau, const GPParams& gp) {
  check_gp(gp);
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ConfigError("gp_quantile: probability outside [0, 1]");
  }
  if (tau == 1.0) {
    if (gp.shape >= 0.0) {
      throw ConfigError("gp_quantile: tau = 1 has an infinite quantile");
    }
    return gp.upper_endpoint();
  }
  // ((1 - tau)^(-xi) - 1) / xi
  return gp.threshold +
         gp.scale * detail::expm1_ratio(gp.shape, -std::log1p(-tau));
}

BlendSpec::BlendSpec(double p_a, double p_b, double c1, double c2)
    : p_a_(p_a), p_b_(p_b), c1_(c1), c2_(c2) {
  if (!(p_a > 0.0 && p_a < p_b && p_b < 1.0)) {
    throw ConfigError("blend levels must satisfy 0 < p_a < p_b < 1");
  }
  if (!(c1 > 3.0) || !(c2 > 3.0)) {
    throw ConfigError("blend shapes c1 and c2 must exceed 3");
  }
  if (c1 < c2) {
    warn("blend shape c1 < c2 puts more weight on the GP tail than the bulk");
  }
  log1m_pa_ = std::log1p(-p_a);
  log1m_pb_ = std::log1p(-p_b);
  log_beta_ = log_beta(c1, c2);
}

double BlendSpec::weight_unit(double z) const {
  return beta_cdf(z, c1_, c2_, log_beta_);
}

double BlendSpec::weight_density_unit(double z) const {
  return beta_pdf(z, c1_, c2_, log_beta_);
}

double BlendSpec::weight_density_deriv_unit(double z) const {
  return beta_pdf_deriv(z, c1_, c2_, log_beta_);
}

double blend_weight(double y, const BlendGeometry& geom,
                    const BlendSpec& spec) {
  if (!(geom.b > geom.a)) throw ConfigError("blending interval needs b > a");
  if (y <= geom.a) return 0.0;
  if (y >= geom.b) return 1.0;
  return spec.weight_unit((y - geom.a) / (geom.b - geom.a));
}

double blend_weight_deriv(double y, const BlendGeometry& geom,
                          const BlendSpec& spec) {
  if (!(geom.b > geom.a)) throw ConfigError("blending interval needs b > a");
  if (y <= geom.a || y >= geom.b) return 0.0;
  const double width = geom.b - geom.a;
  return spec.weight_density_unit((y - geom.a) / width) / width;
}

TailMatch gp_match(double a, double b, const BlendSpec& spec, double xi) {
  if (!(b > a)) throw ConfigError("gp_match needs a < b");
  const detail::Tail<double> tail = detail::match_tail(a, b, xi, spec);
  return {tail.sigma_tilde, tail.u_tilde};
}

BlendedGP::BlendedGP(std::shared_ptr<const BulkDistribution> bulk, double xi,
                     const BlendSpec& spec)
    : bulk_(std::move(bulk)), xi_(xi), spec_(spec) {
  if (!bulk_) throw ConfigError("blended GP needs a bulk distribution");
  if (!std::isfinite(xi)) throw NumericalError("non-finite GP shape");
  geom_.a = bulk_->quantile(spec.p_a());
  geom_.b = bulk_->quantile(spec.p_b());
  if (!(geom_.b > geom_.a)) {
    throw NumericalError("bulk quantiles at p_a and p_b coincide");
  }
  const TailMatch m = gp_match(geom_.a, geom_.b, spec, xi);
  geom_.u_tilde = m.u_tilde;
  geom_.sigma_tilde = m.sigma_tilde;
}

double BlendedGP::cdf(double y) const {
  if (y <= geom_.a) return bulk_->cdf(y);
  if (y >= geom_.b) return gp_cdf(y, tail());
  const detail::Tail<double> t{geom_.u_tilde, geom_.sigma_tilde};
  const double p = blend_weight(y, geom_, spec_);
  const double log_gp =
      detail::log1m_exp(detail::gp_log_survival(y, t, xi_));
  return std::exp((1.0 - p) * std::log(bulk_->cdf(y)) + p * log_gp);
}

double BlendedGP::survival(double y) const {
  if (y >= geom_.b) return gp_survival(y, tail());
  return 1.0 - cdf(y);
}

double BlendedGP::pdf(double y) const {
  if (y <= geom_.a) return bulk_->pdf(y);
  if (y >= geom_.b) return gp_pdf(y, tail());
  const detail::Tail<double> t{geom_.u_tilde, geom_.sigma_tilde};
  const auto mid = detail::blend_mid(y, bulk_->cdf(y), bulk_->pdf(y), geom_.a,
                                     geom_.b, t, xi_, spec_);
  return std::exp(mid.log_cdf) * mid.bracket;
}

double BlendedGP::log_pdf(double y) const {
  const detail::Tail<double> t{geom_.u_tilde, geom_.sigma_tilde};
  if (y <= geom_.a) {
    const double f = bulk_->pdf(y);
    if (!(f > 0.0) && y < 0.0) {
      throw DataError("log density requested below the support");
    }
    return std::log(f);
  }
  return detail::blended_log_density(y, bulk_->cdf(y), bulk_->pdf(y), geom_.a,
                                     geom_.b, t, xi_, spec_);
}

double BlendedGP::quantile(double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ConfigError("quantile level outside [0, 1]");
  }
  if (tau <= spec_.p_a()) return bulk_->quantile(tau);
  if (tau >= spec_.p_b()) return gp_quantile(tau, tail());

  // Newton steps kept inside a shrinking bisection bracket on [a, b].
  double lo = geom_.a;
  double hi = geom_.b;
  double x = lo + (hi - lo) * (tau - spec_.p_a()) / (spec_.p_b() - spec_.p_a());
  for (int it = 0; it < kMaxRootIterations; ++it) {
    const double r = cdf(x) - tau;
    if (std::fabs(r) <= 1e-13) return x;
    if (r < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::fabs(hi))) {
      return x;
    }
    const double slope = pdf(x);
    double next = slope > 0.0 ? x - r / slope : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  const double residual = std::fabs(cdf(x) - tau);
  if (residual > 1e-10) {
    std::ostringstream msg;
    msg << "blended quantile search did not converge at tau=" << tau
        << " (residual " << residual << "); the blended cdf may not be "
        << "monotone on the blending interval";
    throw NumericalError(msg.str());
  }
  return x;
}

namespace {

std::shared_ptr<const BulkDistribution> borrow(const BulkDistribution& bulk) {
  return {std::shared_ptr<const BulkDistribution>{}, &bulk};
}

}  // namespace

double bgp_cdf(double y, const BulkDistribution& bulk, double xi,
               const BlendSpec& spec) {
  return BlendedGP(borrow(bulk), xi, spec).cdf(y);
}

double bgp_pdf(double y, const BulkDistribution& bulk, double xi,
               const BlendSpec& spec) {
  return BlendedGP(borrow(bulk), xi, spec).pdf(y);
}

double bgp_log_pdf(double y, const BulkDistribution& bulk, double xi,
                   const BlendSpec& spec) {
  return BlendedGP(borrow(bulk), xi, spec).log_pdf(y);
}

double bgp_quantile(double tau, const BulkDistribution& bulk, double xi,
                    const BlendSpec& spec) {
  return BlendedGP(borrow(bulk), xi, spec).quantile(tau);
}

double validity_penalty(const BulkDistribution& bulk, double xi,
                        const BlendSpec& spec, int grid_size) {
  if (grid_size < 16) throw ConfigError("validity penalty grid needs >= 16 points");
  const BlendedGP dist(borrow(bulk), xi, spec);
  const BlendGeometry& g = dist.geometry();
  const double cell = detail::penalty_cell(g.a, g.b, grid_size);
  double total = 0.0;
  for (int i = 0; i < grid_size; ++i) {
    const double y = g.a + (i - 1) * cell;
    const double h = dist.pdf(y);
    if (h < 0.0) total -= h;
  }
  return total * cell;
}

}  // namespace spqrx
