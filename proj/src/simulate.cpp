#include "spqrx/simulate.hpp"

#include "spqrx/distributions.hpp"
#include "spqrx/error.hpp"
#include "spqrx/rng.hpp"
#include "spqrx/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace spqrx {

namespace {

constexpr std::uint64_t kCovariateStream = 11;
constexpr std::uint64_t kResponseStream = 12;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_dim(const Eigen::Ref<const Eigen::RowVectorXd>& x, Eigen::Index p) {
  if (x.size() != p) {
    throw DataError("design expects " + std::to_string(p) + " covariates, got " +
                    std::to_string(x.size()));
  }
}

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("quantile level outside [0, 1]");
}

}  // namespace

std::string to_string(Design d) {
  switch (d) {
    case Design::Lognormal:
      return "lognormal";
    case Design::Lomax:
      return "lomax";
    case Design::BoundedGP:
      return "bounded_gp";
  }
  return "";
}

Design parse_design(const std::string& s) {
  if (s == "lognormal") return Design::Lognormal;
  if (s == "lomax") return Design::Lomax;
  if (s == "bounded_gp" || s == "bounded-gp") return Design::BoundedGP;
  throw ConfigError("unknown design '" + s +
                    "' (expected lognormal, lomax or bounded_gp)");
}

int design_dim(Design d) { return d == Design::Lognormal ? 3 : 20; }

double beta0(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  if (x.size() < 10) throw DataError("beta0 needs at least 10 covariates");
  const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3), x5 = x(4);
  const double x6 = x(5), x7 = x(6), x8 = x(7), x9 = x(8), x10 = x(9);
  const double q = x6 + x8 * x9 / 2.0;
  return x1 * x2 + x6 * (1.0 - std::cos(std::numbers::pi * x3 * x4)) +
         2.0 * std::sin(x5) / (std::fabs(x7 - x8) + 2.0) + 0.2 * q * q -
         std::sqrt(x9 * x9 + x10 * x10 + 2.0);
}

double TrueModel::lognormal_mu(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  check_dim(x, 3);
  return 5.0 * (1.0 - logistic(1.0 - 5.0 * x(0) * x(1)));
}

double TrueModel::lognormal_sigma(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  check_dim(x, 3);
  return logistic(1.0 - 5.0 * x(0) * x(1));
}

double TrueModel::lomax_alpha(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  check_dim(x, 20);
  return 3.0 + std::exp(-1.0 + beta0(x));
}

double TrueModel::bounded_xi(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  check_dim(x, 20);
  return -logistic(beta0(x));
}

double TrueModel::quantile(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           double tau) const {
  check_tau(tau);
  switch (design_) {
    case Design::Lognormal:
      if (tau == 0.0) return 0.0;
      if (tau == 1.0) return std::numeric_limits<double>::infinity();
      return std::exp(lognormal_mu(x) + lognormal_sigma(x) * normal_quantile(tau));
    case Design::Lomax:
      // (1 - tau)^(-1/alpha) - 1
      return std::expm1(-std::log1p(-tau) / lomax_alpha(x));
    case Design::BoundedGP:
      return gp_quantile(tau, {0.0, 1.0, bounded_xi(x)});
  }
  return 0.0;
}

double TrueModel::cdf(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                      double y) const {
  switch (design_) {
    case Design::Lognormal: {
      if (!(y > 0.0)) return 0.0;
      const double z = (std::log(y) - lognormal_mu(x)) / lognormal_sigma(x);
      return 0.5 * std::erfc(-z / std::numbers::sqrt2);
    }
    case Design::Lomax:
      if (!(y > 0.0)) return 0.0;
      return -std::expm1(-lomax_alpha(x) * std::log1p(y));
    case Design::BoundedGP:
      return gp_cdf(y, {0.0, 1.0, bounded_xi(x)});
  }
  return 0.0;
}

Eigen::MatrixXd sample_covariates(int p, Eigen::Index n, std::uint64_t seed) {
  if (p < 1 || n < 1) throw ConfigError("simulation needs p >= 1 and n >= 1");
  Rng rng(derive_seed(seed, kCovariateStream));
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.uniform();
  }
  return x;
}

Eigen::VectorXd sample_responses(const TrueModel& truth, const Eigen::MatrixXd& x,
                                 std::uint64_t seed) {
  Rng rng(derive_seed(seed, kResponseStream));
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    y(i) = truth.quantile(x.row(i), rng.uniform());
  }
  return y;
}

Simulated simulate(const SimSpec& spec) {
  const int p = design_dim(spec.design);
  Simulated out{Dataset{}, TrueModel(spec.design)};
  out.data.x = sample_covariates(p, spec.n, spec.seed);
  out.data.y = sample_responses(out.truth, out.data.x, spec.seed);
  for (int j = 0; j < p; ++j) out.data.names.push_back("x" + std::to_string(j + 1));
  return out;
}

Simulated gen_lognormal(Eigen::Index n, std::uint64_t seed) {
  return simulate({Design::Lognormal, n, seed});
}

Simulated gen_lomax(Eigen::Index n, std::uint64_t seed) {
  return simulate({Design::Lomax, n, seed});
}

Simulated gen_gp_bounded(Eigen::Index n, std::uint64_t seed) {
  return simulate({Design::BoundedGP, n, seed});
}

}  // namespace spqrx
