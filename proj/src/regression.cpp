#include "spqrx/regression.hpp"

#include "spqrx/dual.hpp"
#include "spqrx/error.hpp"
#include "spqrx/parallel.hpp"
#include "spqrx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

namespace spqrx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- Dataset

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.names = names;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::Index r = rows[i];
    if (r < 0 || r >= x.rows()) throw DataError("row index out of range");
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(r);
    out.y(static_cast<Eigen::Index>(i)) = y(r);
  }
  return out;
}

void Dataset::validate(bool require_positive) const {
  if (x.rows() != y.size()) {
    throw DataError("covariate and response row counts differ");
  }
  if (x.rows() == 0) throw DataError("dataset has no rows");
  if (x.cols() == 0) throw DataError("dataset has no covariates");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != x.cols()) {
    throw DataError("covariate name count does not match the columns");
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!x.row(i).allFinite() || !std::isfinite(y(i))) {
      throw DataError("non-finite value in data row " + std::to_string(i + 1));
    }
    if (require_positive && !(y(i) > 0.0)) {
      throw DataError("response in data row " + std::to_string(i + 1) +
                      " is not positive; use the sqrt transform for "
                      "nonnegative responses");
    }
    if (!require_positive && y(i) < 0.0) {
      throw DataError("response in data row " + std::to_string(i + 1) +
                      " is negative");
    }
  }
}

// ---------------------------------------------------------------- Scaling

Scaling Scaling::fit(const Dataset& train, bool sqrt_transform) {
  train.validate(!sqrt_transform);
  Scaling s;
  s.sqrt_transform = sqrt_transform;
  s.covariate_names = train.names;
  const Eigen::VectorXd t =
      sqrt_transform ? Eigen::VectorXd(train.y.array().sqrt()) : train.y;
  s.y_min = t.minCoeff();
  s.y_max = t.maxCoeff();
  if (!(s.y_max > s.y_min)) throw DataError("training response is constant");
  const Eigen::Index n = train.rows();
  s.x_mean = train.x.colwise().mean().transpose();
  s.x_sd.resize(train.cols());
  for (Eigen::Index j = 0; j < train.cols(); ++j) {
    // Sample standard deviation (n - 1 denominator).
    const double ss = (train.x.col(j).array() - s.x_mean(j)).square().sum();
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    if (sd > 0.0) {
      s.x_sd(j) = sd;
    } else {
      s.x_sd(j) = 1.0;
      warn("covariate column " + std::to_string(j + 1) +
           " is constant; it is centred but not scaled");
    }
  }
  return s;
}

double Scaling::scale_response(double y) const {
  if (sqrt_transform) {
    if (y < 0.0) throw DataError("negative response under the sqrt transform");
    y = std::sqrt(y);
  }
  return (y - y_min) / (y_max - y_min);
}

double Scaling::unscale_response(double s) const {
  const double t = y_min + s * (y_max - y_min);
  return sqrt_transform ? t * t : t;
}

double Scaling::response_jacobian(double y) const {
  const double range = y_max - y_min;
  if (!sqrt_transform) return 1.0 / range;
  if (!(y > 0.0)) return kInf;
  return 1.0 / (2.0 * std::sqrt(y) * range);
}

Eigen::VectorXd Scaling::scale_responses(const Eigen::VectorXd& y) const {
  Eigen::VectorXd s(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) s(i) = scale_response(y(i));
  return s;
}

Eigen::RowVectorXd Scaling::normalize_row(
    const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (x.size() != x_mean.size()) {
    throw DataError("expected " + std::to_string(x_mean.size()) +
                    " covariates, got " + std::to_string(x.size()));
  }
  return (x.array() - x_mean.transpose().array()) / x_sd.transpose().array();
}

Eigen::MatrixXd Scaling::normalize(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.cols() != x_mean.size()) {
    throw DataError("expected " + std::to_string(x_mean.size()) +
                    " covariates, got " + std::to_string(x.cols()));
  }
  Eigen::MatrixXd out = x.rowwise() - x_mean.transpose();
  return out.array().rowwise() / x_sd.transpose().array();
}

// ---------------------------------------------------------------- mixtures

double mixture_cdf(const LocalBasis& lb, const double* w) {
  double s = 0.0;
  for (int k = 0; k < lb.first; ++k) s += w[k];
  for (int i = 0; i < lb.count; ++i) s += w[lb.first + i] * lb.i[i];
  return s;
}

double mixture_pdf(const LocalBasis& lb, const double* w) {
  double s = 0.0;
  for (int i = 0; i < lb.count; ++i) s += w[lb.first + i] * lb.m[i];
  return s;
}

double mixture_pdf_deriv(const LocalBasis& lb, const double* w) {
  double s = 0.0;
  for (int i = 0; i < lb.count; ++i) s += w[lb.first + i] * lb.dm[i];
  return s;
}

double mixture_quantile(const SplineBasis& basis, const double* w, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ConfigError("quantile level outside [0, 1]");
  }
  if (tau == 0.0) return 0.0;
  if (tau == 1.0) return 1.0;
  const int last = kQuantileGrid - 1;
  const auto grid_y = [last](int i) { return static_cast<double>(i) / last; };
  int lo = 0;
  int hi = last;
  double f_lo = 0.0;
  double f_hi = 1.0;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    const double fm = mixture_cdf(basis.local(grid_y(mid)), w);
    if (fm == tau) return grid_y(mid);
    if (fm < tau) {
      lo = mid;
      f_lo = fm;
    } else {
      hi = mid;
      f_hi = fm;
    }
  }
  double a = grid_y(lo);
  double b = grid_y(hi);
  double x = f_hi > f_lo ? a + (b - a) * (tau - f_lo) / (f_hi - f_lo) : 0.5 * (a + b);
  x = std::clamp(x, a, b);
  for (int it = 0; it < 100; ++it) {
    const LocalBasis lb = basis.local(x);
    const double r = mixture_cdf(lb, w) - tau;
    if (r == 0.0) return x;
    if (r < 0.0) {
      a = x;
    } else {
      b = x;
    }
    const double f = mixture_pdf(lb, w);
    double next = f > 0.0 ? x - r / f : kNaN;
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::fabs(next - x) <= 1e-16 ||
        b - a <= 2.0 * std::numeric_limits<double>::epsilon()) {
      return next;
    }
    x = next;
  }
  return x;
}

SplineMixture::SplineMixture(std::shared_ptr<const SplineBasis> basis,
                             Eigen::VectorXd weights)
    : basis_(std::move(basis)), weights_(std::move(weights)) {
  if (!basis_) throw ConfigError("spline mixture needs a basis");
  if (weights_.size() != basis_->num_basis()) {
    throw ConfigError("mixture weight count does not match the basis size");
  }
  if ((weights_.array() < 0.0).any() || !weights_.allFinite() ||
      std::fabs(weights_.sum() - 1.0) > 1e-9) {
    throw ConfigError("mixture weights must be a probability vector");
  }
}

double SplineMixture::cdf(double y) const {
  return mixture_cdf(basis_->local(y), weights_.data());
}

double SplineMixture::pdf(double y) const {
  return mixture_pdf(basis_->local(y), weights_.data());
}

double SplineMixture::quantile(double tau) const {
  return mixture_quantile(*basis_, weights_.data(), tau);
}

// ---------------------------------------------------- conditional models

ConditionalDistribution::ConditionalDistribution(
    std::shared_ptr<const SplineMixture> bulk)
    : bulk_(std::move(bulk)) {}

ConditionalDistribution::ConditionalDistribution(
    std::shared_ptr<const SplineMixture> bulk, double xi, const BlendSpec& spec)
    : bulk_(std::move(bulk)) {
  blend_.emplace(bulk_, xi, spec);
}

const BlendedGP& ConditionalDistribution::blend() const {
  if (!blend_) throw ConfigError("SPQR distribution has no GP tail");
  return *blend_;
}

double ConditionalDistribution::xi() const { return blend().xi(); }

double ConditionalDistribution::cdf(double y) const {
  return blend_ ? blend_->cdf(y) : bulk_->cdf(y);
}

double ConditionalDistribution::survival(double y) const {
  return blend_ ? blend_->survival(y) : 1.0 - bulk_->cdf(y);
}

double ConditionalDistribution::pdf(double y) const {
  return blend_ ? blend_->pdf(y) : bulk_->pdf(y);
}

double ConditionalDistribution::log_pdf(double y) const {
  if (blend_) return blend_->log_pdf(y);
  return std::log(bulk_->pdf(y));
}

double ConditionalDistribution::quantile(double tau) const {
  return blend_ ? blend_->quantile(tau) : bulk_->quantile(tau);
}

std::string to_string(ModelMode m) {
  return m == ModelMode::Spqr ? "spqr" : "spqrx";
}

ModelMode parse_model_mode(const std::string& s) {
  if (s == "spqr") return ModelMode::Spqr;
  if (s == "spqrx") return ModelMode::Spqrx;
  throw ConfigError("unknown model mode '" + s + "' (expected spqr or spqrx)");
}

void Architecture::validate() const {
  if (order < 1 || order > kMaxSplineOrder - 1) {
    throw ConfigError("spline order must lie in [1, " +
                      std::to_string(kMaxSplineOrder - 1) + "]");
  }
  if (num_basis < order) throw ConfigError("number of basis functions K must be >= order d");
  if (num_basis > 127) throw ConfigError("at most 127 basis functions are supported");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer widths must be positive");
  }
  xi_activation.validate();
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  if (!(density_penalty >= 0.0)) throw ConfigError("density penalty must be >= 0");
  if (!(l1_xi >= 0.0)) throw ConfigError("L1 coefficient must be >= 0");
  if (batch_size < 0) throw ConfigError("batch size must be >= 0");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) {
    throw ConfigError("learning-rate decay must lie in (0, 1)");
  }
  if (max_restarts < 0) throw ConfigError("max_restarts must be >= 0");
  if (penalty_grid < 16) throw ConfigError("penalty grid needs >= 16 points");
}

std::string TrainingConfig::canonical() const {
  std::ostringstream s;
  s << "learning_rate=" << format_double(learning_rate)
    << ";max_epochs=" << max_epochs << ";patience=" << patience
    << ";validation_fraction=" << format_double(validation_fraction)
    << ";density_penalty=" << format_double(density_penalty)
    << ";l1_xi=" << format_double(l1_xi) << ";seed=" << seed
    << ";batch_size=" << batch_size << ";lr_decay=" << format_double(lr_decay)
    << ";max_restarts=" << max_restarts << ";penalty_grid=" << penalty_grid
    << ";xi_init=" << format_double(xi_init)
    << ";sqrt_transform=" << (sqrt_transform ? 1 : 0);
  return s.str();
}

namespace {

std::string canonical(const Architecture& a) {
  std::ostringstream s;
  s << "K=" << a.num_basis << ";d=" << a.order << ";hidden=";
  for (int h : a.hidden) s << h << ',';
  s << ";activation=" << to_string(a.activation)
    << ";xi=" << to_string(a.xi_activation.kind) << ','
    << format_double(a.xi_activation.lo) << ','
    << format_double(a.xi_activation.hi);
  return s.str();
}

std::string canonical(const BlendSpec& b) {
  return "p_a=" + format_double(b.p_a()) + ";p_b=" + format_double(b.p_b()) +
         ";c1=" + format_double(b.c1()) + ";c2=" + format_double(b.c2());
}

}  // namespace

FittedModel::FittedModel(ModelMode mode, std::shared_ptr<const SplineBasis> basis,
                         Network network, std::optional<BlendSpec> blend,
                         Scaling scaling)
    : mode_(mode),
      basis_(std::move(basis)),
      network_(std::move(network)),
      blend_(std::move(blend)),
      scaling_(std::move(scaling)) {
  if (!basis_) throw ConfigError("model needs a spline basis");
  if (network_.num_basis() != basis_->num_basis()) {
    throw ConfigError("network output size does not match the basis");
  }
  if (network_.input_dim() != scaling_.x_mean.size()) {
    throw ConfigError("network input size does not match the scaling constants");
  }
  const bool star = network_.head() == HeadMode::SoftmaxStar;
  if (mode_ == ModelMode::Spqrx && (!blend_ || !star)) {
    throw ConfigError("SPQRx models need a blend spec and a softmax* head");
  }
  if (mode_ == ModelMode::Spqr && (blend_ || star)) {
    throw ConfigError("SPQR models take neither a blend spec nor a xi head");
  }
}

NetworkOutput FittedModel::outputs(
    const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const Eigen::VectorXd xn = scaling_.normalize_row(x).transpose();
  return network_.forward(xn);
}

ConditionalDistribution FittedModel::conditional(
    const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  NetworkOutput out = outputs(x);
  auto bulk = std::make_shared<const SplineMixture>(basis_, std::move(out.weights));
  if (mode_ == ModelMode::Spqr) return ConditionalDistribution(std::move(bulk));
  return ConditionalDistribution(std::move(bulk), out.xi, *blend_);
}

std::vector<ConditionalDistribution> FittedModel::conditionals(
    const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  const ForwardCache cache = network_.forward_batch(scaling_.normalize(x).transpose());
  std::vector<ConditionalDistribution> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto bulk = std::make_shared<const SplineMixture>(
        basis_, Eigen::VectorXd(cache.weights.col(i)));
    if (mode_ == ModelMode::Spqr) {
      out.emplace_back(std::move(bulk));
    } else {
      out.emplace_back(std::move(bulk), cache.xi(i), *blend_);
    }
  }
  return out;
}

Eigen::VectorXd FittedModel::xi_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (mode_ != ModelMode::Spqrx) throw ConfigError("SPQR models have no xi(x)");
  return network_.forward_batch(scaling_.normalize(x).transpose()).xi;
}

double FittedModel::xi(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (mode_ != ModelMode::Spqrx) throw ConfigError("SPQR models have no xi(x)");
  return outputs(x).xi;
}

double FittedModel::cdf(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                        double y) const {
  return conditional(x).cdf(scaling_.scale_response(y));
}

double FittedModel::density(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                            double y) const {
  return conditional(x).pdf(scaling_.scale_response(y)) *
         scaling_.response_jacobian(y);
}

double FittedModel::quantile(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                             double tau) const {
  return scaling_.unscale_response(conditional(x).quantile(tau));
}

double spqr_density(const FittedModel& m,
                    const Eigen::Ref<const Eigen::RowVectorXd>& x, double y) {
  return m.conditional(x).bulk().pdf(y);
}

double spqr_cdf(const FittedModel& m,
                const Eigen::Ref<const Eigen::RowVectorXd>& x, double y) {
  return m.conditional(x).bulk().cdf(y);
}

double spqr_quantile(const FittedModel& m,
                     const Eigen::Ref<const Eigen::RowVectorXd>& x, double tau) {
  return m.conditional(x).bulk().quantile(tau);
}

namespace {

const FittedModel& require_spqrx(const FittedModel& m) {
  if (m.mode() != ModelMode::Spqrx) {
    throw ConfigError("operation requires an SPQRx model");
  }
  return m;
}

}  // namespace

double spqrx_density(const FittedModel& m,
                     const Eigen::Ref<const Eigen::RowVectorXd>& x, double y) {
  return require_spqrx(m).conditional(x).pdf(y);
}

double spqrx_cdf(const FittedModel& m,
                 const Eigen::Ref<const Eigen::RowVectorXd>& x, double y) {
  return require_spqrx(m).conditional(x).cdf(y);
}

double spqrx_quantile(const FittedModel& m,
                      const Eigen::Ref<const Eigen::RowVectorXd>& x, double tau) {
  return require_spqrx(m).conditional(x).quantile(tau);
}

// -------------------------------------------------------------- objective

namespace {

struct RowLoss {
  double nll;
  double penalty;
};

RowLoss spqr_row(const SplineBasis& basis, const double* w, double y,
                 double* grad_w) {
  const LocalBasis lb = basis.local(y);
  const double f = mixture_pdf(lb, w);
  if (grad_w != nullptr) {
    for (int i = 0; i < lb.count; ++i) grad_w[lb.first + i] = -lb.m[i] / f;
  }
  return {-std::log(f), 0.0};
}

// Dual numbers carry derivatives with respect to (xi, w_1, ..., w_K).
template <int N>
Dual<N> mixture_cdf_dual(const LocalBasis& lb, int active, double value) {
  Dual<N> r(value, active);
  for (int k = 0; k < lb.first; ++k) r.d[1 + k] = 1.0;
  for (int i = 0; i < lb.count; ++i) r.d[1 + lb.first + i] = lb.i[i];
  return r;
}

template <int N>
Dual<N> mixture_pdf_dual(const LocalBasis& lb, int active, double value) {
  Dual<N> r(value, active);
  for (int i = 0; i < lb.count; ++i) r.d[1 + lb.first + i] = lb.m[i];
  return r;
}

// Bulk quantile q solving F(q) = p, differentiated implicitly:
// dq/dw_k = -I_k(q) / f(q).
template <int N>
Dual<N> implicit_quantile(double q, const LocalBasis& lb, double f, int active) {
  Dual<N> r = mixture_cdf_dual<N>(lb, active, q);
  for (int i = 1; i < active; ++i) r.d[i] = -r.d[i] / f;
  return r;
}

using PenaltyNodeView = Objective::PenaltyNode;

template <int N>
RowLoss spqrx_row(const SplineBasis& basis, const BlendSpec& spec,
                  const std::vector<PenaltyNodeView>& nodes, int grid,
                  double lambda, bool likelihood, double xi, const double* w,
                  double y, double* grad_xi, double* grad_w) {
  using D = Dual<N>;
  const int K = basis.num_basis();
  const int n = K + 1;
  const bool want = grad_w != nullptr;

  const double a = mixture_quantile(basis, w, spec.p_a());
  const double b = mixture_quantile(basis, w, spec.p_b());
  const LocalBasis la = basis.local(a);
  const LocalBasis lb = basis.local(b);
  const double fa = mixture_pdf(la, w);
  const double fb = mixture_pdf(lb, w);
  if (!(b > a) || !(fa > 0.0) || !(fb > 0.0)) return {kNaN, kNaN};

  const D xd = D::variable(xi, n, 0);
  const D ad = implicit_quantile<N>(a, la, fa, n);
  const D bd = implicit_quantile<N>(b, lb, fb, n);
  const detail::Tail<D> tail = detail::match_tail(ad, bd, xd, spec);

  RowLoss out{0.0, 0.0};
  const LocalBasis ly = basis.local(y);
  if (!likelihood) {
    // Penalty only: the likelihood term and its gradient stay zero.
  } else if (y <= a) {
    out = spqr_row(basis, w, y, grad_w);
  } else {
    const D fy = mixture_pdf_dual<N>(ly, n, mixture_pdf(ly, w));
    const D Fy = mixture_cdf_dual<N>(ly, n, mixture_cdf(ly, w));
    const D l = detail::blended_log_density(D(y, n), Fy, fy, ad, bd, tail, xd,
                                            spec);
    out.nll = -l.v;
    if (want) {
      *grad_xi = -l.d[0];
      for (int k = 0; k < K; ++k) grad_w[k] = -l.d[1 + k];
    }
  }

  // Validity penalty over the blending interval. Outside (a, b) the density
  // is nonnegative, and inside only the sign of the bracket decides whether
  // a node contributes, so the exact value is formed only where needed.
  const double width = b - a;
  const double cell = width / static_cast<double>(grid - 3);
  const detail::Tail<double> td{tail.u_tilde.v, tail.sigma_tilde.v};
  const double log_sigma = std::log(td.sigma_tilde);
  D pen_d(0.0, n);
  double pen = 0.0;
  for (const PenaltyNodeView& node : nodes) {
    const double yg = a + node.z * width;
    const LocalBasis lg = basis.local(yg);
    const double F = mixture_cdf(lg, w);
    const double f = mixture_pdf(lg, w);
    const double log_s = detail::gp_log_survival(yg, td, xi);
    const double log_fgp_cdf = detail::log1m_exp(log_s);
    const double log_F = std::log(F);
    const double bracket = node.dp / width * (log_fgp_cdf - log_F) +
                           node.p * std::exp((1.0 + xi) * log_s - log_sigma -
                                             log_fgp_cdf) +
                           (1.0 - node.p) * f / F;
    if (!(bracket < 0.0)) continue;
    const double h =
        std::exp((1.0 - node.p) * log_F + node.p * log_fgp_cdf) * bracket;
    pen -= h * cell;
    if (want) {
      const D yd = ad + node.z * (bd - ad);
      D Fd = mixture_cdf_dual<N>(lg, n, F);
      D fd = mixture_pdf_dual<N>(lg, n, f);
      const double fprime = mixture_pdf_deriv(lg, w);
      for (int i = 0; i < n; ++i) {
        Fd.d[i] += f * yd.d[i];
        fd.d[i] += fprime * yd.d[i];
      }
      const auto mid = detail::blend_mid(yd, Fd, fd, ad, bd, tail, xd, spec);
      const D hd = exp(mid.log_cdf) * mid.bracket;
      pen_d += hd * ((bd - ad) / static_cast<double>(grid - 3));
    }
  }
  out.penalty = pen;
  if (want && pen > 0.0) {
    *grad_xi -= lambda * pen_d.d[0];
    for (int k = 0; k < K; ++k) grad_w[k] -= lambda * pen_d.d[1 + k];
  }
  return out;
}

using SpqrxRowFn = RowLoss (*)(const SplineBasis&, const BlendSpec&,
                               const std::vector<PenaltyNodeView>&, int, double,
                               bool, double, const double*, double, double*,
                               double*);

SpqrxRowFn pick_row_fn(int num_basis) {
  const int n = num_basis + 1;
  if (n <= 8) return &spqrx_row<8>;
  if (n <= 16) return &spqrx_row<16>;
  if (n <= 32) return &spqrx_row<32>;
  if (n <= 64) return &spqrx_row<64>;
  if (n <= 128) return &spqrx_row<128>;
  throw ConfigError("too many basis functions for the gradient evaluator");
}

}  // namespace

Objective::Objective(std::shared_ptr<const SplineBasis> basis,
                     std::optional<BlendSpec> blend, double density_penalty,
                     double l1_xi, int penalty_grid)
    : basis_(std::move(basis)),
      blend_(std::move(blend)),
      lambda_(density_penalty),
      l1_(l1_xi),
      grid_(penalty_grid) {
  if (!basis_) throw ConfigError("objective needs a spline basis");
  if (grid_ < 16) throw ConfigError("penalty grid needs >= 16 points");
  if (blend_) {
    // Grid nodes a + (g - 1) * cell, g = 0..G-1, strictly inside (a, b).
    for (int g = 2; g <= grid_ - 3; ++g) {
      const double z = static_cast<double>(g - 1) / (grid_ - 3);
      nodes_.push_back({z, blend_->weight_unit(z), blend_->weight_density_unit(z)});
    }
  }
}

Objective Objective::penalty_only() const {
  if (!blend_) throw ConfigError("the validity penalty needs a blend spec");
  Objective o = *this;
  o.likelihood_ = false;
  o.l1_ = 0.0;
  return o;
}

double Objective::evaluate(const Network& net,
                           const Eigen::Ref<const Eigen::MatrixXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& y, bool mean,
                           std::vector<double>* grad, LossTerms* terms) const {
  const int K = basis_->num_basis();
  if (net.num_basis() != K) {
    throw ConfigError("network output size does not match the basis");
  }
  if ((net.head() == HeadMode::SoftmaxStar) != blend_.has_value()) {
    throw ConfigError("head mode does not match the objective");
  }
  if (x.cols() != y.size()) throw DataError("batch covariates and responses differ in length");
  const Eigen::Index m = x.cols();
  if (m == 0) throw DataError("empty batch");

  const ForwardCache cache = net.forward_batch(x);
  Eigen::VectorXd grad_xi;
  Eigen::MatrixXd grad_w;
  if (grad != nullptr) {
    grad_xi = Eigen::VectorXd::Zero(m);
    grad_w = Eigen::MatrixXd::Zero(K, m);
  }
  const SpqrxRowFn row_fn = blend_ ? pick_row_fn(K) : nullptr;

  double nll = 0.0;
  double pen = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double* w = cache.weights.col(j).data();
    double* gw = grad != nullptr ? grad_w.col(j).data() : nullptr;
    RowLoss r;
    if (blend_) {
      double* gx = grad != nullptr ? &grad_xi(j) : nullptr;
      r = row_fn(*basis_, *blend_, nodes_, grid_, lambda_, likelihood_, cache.xi(j),
                 w, y(j), gx, gw);
    } else {
      r = spqr_row(*basis_, w, y(j), gw);
    }
    nll += r.nll;
    pen += r.penalty;
  }
  const double scale = mean ? 1.0 / static_cast<double>(m) : 1.0;
  const double l1 = net.l1_penalty(l1_);
  if (terms != nullptr) *terms = {nll, pen, l1};
  if (grad != nullptr) {
    grad_xi *= scale;
    grad_w *= scale;
    *grad = net.backward(cache, grad_xi, grad_w);
    net.add_l1_gradient(l1_, *grad);
  }
  return scale * (nll + lambda_ * pen) + l1;
}

double nll_loss(const FittedModel& model, const Dataset& batch,
                const TrainingConfig& config) {
  const bool x = model.mode() == ModelMode::Spqrx;
  Objective obj(model.basis_ptr(), model.blend(), x ? config.density_penalty : 0.0,
                x ? config.l1_xi : 0.0, config.penalty_grid);
  const Eigen::MatrixXd xs = model.scaling().normalize(batch.x).transpose();
  const Eigen::VectorXd ys = model.scaling().scale_responses(batch.y);
  return obj.evaluate(model.network(), xs, ys, false);
}

// --------------------------------------------------------------- training

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
validation_split(Eigen::Index n, double fraction, std::uint64_t seed) {
  const auto n_val =
      static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n)));
  if (n_val < 1 || n_val >= n) {
    throw DataError("too few rows (" + std::to_string(n) +
                    ") for a training/validation split");
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<Eigen::Index> val(idx.begin(), idx.begin() + n_val);
  std::vector<Eigen::Index> train(idx.begin() + n_val, idx.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

namespace {

enum Stream : std::uint64_t {
  kSplitStream = 1,
  kInitStream = 2,
  kSpqrBatchStream = 3,
  kSpqrxBatchStream = 4,
  kSpqrxWarmupStream = 5,
};

struct Prepared {
  Eigen::MatrixXd train_x;  // p x n_train, normalized
  Eigen::VectorXd train_y;  // scaled
  Eigen::MatrixXd val_x;
  Eigen::VectorXd val_y;
  Eigen::VectorXd all_y;
};

Prepared prepare(const Dataset& data, const Scaling& scaling,
                 const TrainingConfig& cfg) {
  const Eigen::MatrixXd xn = scaling.normalize(data.x).transpose();
  const Eigen::VectorXd ys = scaling.scale_responses(data.y);
  const auto [train, val] = validation_split(
      data.rows(), cfg.validation_fraction, derive_seed(cfg.seed, kSplitStream));
  Prepared p;
  p.all_y = ys;
  p.train_x.resize(xn.rows(), static_cast<Eigen::Index>(train.size()));
  p.train_y.resize(static_cast<Eigen::Index>(train.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    p.train_x.col(static_cast<Eigen::Index>(i)) = xn.col(train[i]);
    p.train_y(static_cast<Eigen::Index>(i)) = ys(train[i]);
  }
  p.val_x.resize(xn.rows(), static_cast<Eigen::Index>(val.size()));
  p.val_y.resize(static_cast<Eigen::Index>(val.size()));
  for (std::size_t i = 0; i < val.size(); ++i) {
    p.val_x.col(static_cast<Eigen::Index>(i)) = xn.col(val[i]);
    p.val_y(static_cast<Eigen::Index>(i)) = ys(val[i]);
  }
  return p;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Copies the columns order[start, start + count) into the batch buffers.
void gather_batch(const Prepared& data, const std::vector<Eigen::Index>& order,
                  Eigen::Index start, Eigen::Index count, Eigen::MatrixXd& bx,
                  Eigen::VectorXd& by) {
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index r = order[static_cast<std::size_t>(start + i)];
    bx.col(i) = data.train_x.col(r);
    by(i) = data.train_y(r);
  }
}

// A pre-trained start can place rows where the blended density is negative.
// The likelihood is undefined there and the restart scheme has no finite
// checkpoint to fall back on, so the validity penalty alone is descended
// until the objective is finite on every training and validation row.
void validity_warmup(Network& net, const Objective& obj, const Prepared& data,
                     const TrainingConfig& cfg, std::uint64_t batch_seed,
                     TrainingSummary& summary) {
  const auto finite_everywhere = [&] {
    return std::isfinite(obj.evaluate(net, data.train_x, data.train_y, true)) &&
           std::isfinite(obj.evaluate(net, data.val_x, data.val_y, true));
  };
  if (finite_everywhere()) return;
  const Objective pen = obj.penalty_only();
  const Eigen::Index n_train = data.train_x.cols();
  const Eigen::Index batch =
      cfg.batch_size > 0 ? std::min<Eigen::Index>(cfg.batch_size, n_train) : n_train;
  std::vector<double> params = net.flatten();
  AdamState adam;
  Rng rng(batch_seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::MatrixXd bx(data.train_x.rows(), batch);
  Eigen::VectorXd by(batch);
  std::vector<double> grad;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (batch < n_train) rng.shuffle(order);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n_train; start += batch) {
      const Eigen::Index cnt = std::min(batch, n_train - start);
      gather_batch(data, order, start, cnt, bx, by);
      const double loss = pen.evaluate(net, bx.leftCols(cnt), by.head(cnt), true, &grad);
      if (!std::isfinite(loss) || !all_finite(grad)) {
        throw NumericalError("validity warm-up produced a non-finite penalty");
      }
      loss_sum += loss * static_cast<double>(cnt);
      adam_step(adam, params, grad, cfg.learning_rate);
      net.assign(params);
    }
    summary.log.push_back({"warmup", epoch, loss_sum / static_cast<double>(n_train),
                           kNaN, cfg.learning_rate, 0});
    if (finite_everywhere()) return;
  }
  throw NumericalError("the blended density stays negative at some rows after " +
                       std::to_string(cfg.max_epochs) + " validity warm-up epochs");
}

// Adam with per-epoch checkpointing on the validation loss, early stopping,
// and learning-rate restarts after non-finite losses. Leaves `net` at the
// parameters with the lowest validation loss.
void run_training(Network& net, const Objective& obj, const Prepared& data,
                  const TrainingConfig& cfg, const std::string& phase,
                  std::uint64_t batch_seed, TrainingSummary& summary) {
  const Eigen::Index n_train = data.train_x.cols();
  const Eigen::Index batch =
      cfg.batch_size > 0 ? std::min<Eigen::Index>(cfg.batch_size, n_train) : n_train;
  std::vector<double> params = net.flatten();
  AdamState adam;
  std::vector<double> good_params = params;
  AdamState good_adam = adam;
  std::vector<double> best_params = params;
  double best_val = kInf;
  int best_epoch = 0;
  int since_best = 0;
  int restarts = 0;
  double lr = cfg.learning_rate;
  double last_train = kNaN;

  Rng rng(batch_seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::MatrixXd bx(data.train_x.rows(), batch);
  Eigen::VectorXd by(batch);
  std::vector<double> grad;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (batch < n_train) rng.shuffle(order);
    bool bad = false;
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n_train; start += batch) {
      const Eigen::Index cnt = std::min(batch, n_train - start);
      double loss;
      net.assign(params);
      if (batch == n_train) {
        loss = obj.evaluate(net, data.train_x, data.train_y, true, &grad);
      } else {
        gather_batch(data, order, start, cnt, bx, by);
        loss = obj.evaluate(net, bx.leftCols(cnt), by.head(cnt), true, &grad);
      }
      if (!std::isfinite(loss) || !all_finite(grad)) {
        bad = true;
        break;
      }
      loss_sum += loss * static_cast<double>(cnt);
      adam_step(adam, params, grad, lr);
    }
    double val = kNaN;
    double train_loss = kNaN;
    if (!bad) {
      train_loss = loss_sum / static_cast<double>(n_train);
      net.assign(params);
      val = obj.evaluate(net, data.val_x, data.val_y, true);
      bad = !std::isfinite(val) || !all_finite(params);
    }
    if (bad) {
      ++restarts;
      summary.log.push_back({phase, epoch, train_loss, val, lr, restarts});
      if (restarts > cfg.max_restarts) {
        throw NumericalError(phase + " training produced non-finite losses after " +
                             std::to_string(cfg.max_restarts) +
                             " learning-rate restarts");
      }
      params = good_params;
      adam = good_adam;
      lr *= cfg.lr_decay;
      continue;
    }
    good_params = params;
    good_adam = adam;
    last_train = train_loss;
    summary.log.push_back({phase, epoch, train_loss, val, lr, restarts});
    if (val < best_val) {
      best_val = val;
      best_params = params;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (!std::isfinite(best_val)) {
    throw NumericalError(phase + " training never reached a finite validation loss");
  }
  net.assign(best_params);
  summary.best_epoch = best_epoch;
  summary.best_val_loss = best_val;
  summary.final_train_loss = last_train;
  summary.restarts += restarts;
}

}  // namespace

FittedModel fit_spqr(const Dataset& train, const Architecture& arch,
                     const TrainingConfig& config) {
  arch.validate();
  config.validate();
  const Scaling scaling = Scaling::fit(train, config.sqrt_transform);
  const Prepared data = prepare(train, scaling, config);
  auto basis = std::make_shared<const SplineBasis>(SplineBasis::from_sample(
      arch.num_basis, arch.order,
      std::span<const double>(data.all_y.data(), data.all_y.size())));
  Network net = Network::initialize(
      static_cast<int>(train.cols()), arch.hidden, arch.num_basis,
      arch.activation, HeadMode::Softmax, arch.xi_activation,
      derive_seed(config.seed, kInitStream));
  const Objective obj(basis, std::nullopt, 0.0, 0.0, config.penalty_grid);

  TrainingSummary summary;
  summary.seed = config.seed;
  summary.n_train = static_cast<std::size_t>(train.rows());
  summary.config_hash = hex64(fnv1a(config.canonical() + "|" + canonical(arch)));
  run_training(net, obj, data, config, "spqr",
               derive_seed(config.seed, kSpqrBatchStream), summary);
  FittedModel model(ModelMode::Spqr, basis, std::move(net), std::nullopt, scaling);
  model.training() = std::move(summary);
  return model;
}

FittedModel fit_spqrx_from(const Dataset& train, const FittedModel& pretrained,
                           const XiActivation& xi_activation,
                           const BlendSpec& blend, const TrainingConfig& config) {
  config.validate();
  xi_activation.validate();
  if (pretrained.mode() != ModelMode::Spqr) {
    throw ConfigError("SPQRx pre-training expects an SPQR model");
  }
  if (pretrained.training().n_train != static_cast<std::size_t>(train.rows())) {
    throw ConfigError("pre-trained model was fitted to a different dataset");
  }
  const Prepared data = prepare(train, pretrained.scaling(), config);
  Network net = pretrained.network().with_xi_head(xi_activation, config.xi_init);
  // Training minimises the summed objective divided by the number of training
  // rows, so the L1 coefficient is spread over those rows as well.
  const double l1_per_row = config.l1_xi / static_cast<double>(data.train_y.size());
  const Objective obj(pretrained.basis_ptr(), blend, config.density_penalty, l1_per_row,
                      config.penalty_grid);

  TrainingSummary summary = pretrained.training();
  Architecture arch;
  arch.num_basis = pretrained.basis().num_basis();
  arch.order = pretrained.basis().order();
  arch.hidden = pretrained.network().hidden();
  arch.activation = pretrained.network().hidden_activation();
  arch.xi_activation = xi_activation;
  summary.config_hash = hex64(fnv1a(config.canonical() + "|" + canonical(arch) +
                                    "|" + canonical(blend)));
  validity_warmup(net, obj, data, config, derive_seed(config.seed, kSpqrxWarmupStream),
                  summary);
  run_training(net, obj, data, config, "spqrx",
               derive_seed(config.seed, kSpqrxBatchStream), summary);
  FittedModel model(ModelMode::Spqrx, pretrained.basis_ptr(), std::move(net),
                    blend, pretrained.scaling());
  model.training() = std::move(summary);
  return model;
}

FittedModel fit_spqrx(const Dataset& train, const Architecture& arch,
                      const BlendSpec& blend, const TrainingConfig& config) {
  const FittedModel pre = fit_spqr(train, arch, config);
  return fit_spqrx_from(train, pre, arch.xi_activation, blend, config);
}

// ------------------------------------------------------------ grid search

std::size_t GridSpec::cells(ModelMode mode) const {
  std::size_t n = num_basis.size() * hidden_width.size() * activation.size();
  if (mode == ModelMode::Spqrx) n *= p_a.size() * p_b.size() * c1.size();
  return n;
}

GridResult grid_search(const Dataset& train, ModelMode mode, const GridSpec& grid,
                       const Architecture& base, const TrainingConfig& config,
                       const ModelScore& score, int threads) {
  if (grid.cells(mode) == 0) throw ConfigError("hyper-parameter grid is empty");
  if (grid.hidden_layers < 1) throw ConfigError("grid needs at least one hidden layer");
  std::vector<Architecture> archs;
  for (int k : grid.num_basis) {
    for (int width : grid.hidden_width) {
      for (HiddenActivation act : grid.activation) {
        Architecture a = base;
        a.num_basis = k;
        a.hidden.assign(static_cast<std::size_t>(grid.hidden_layers), width);
        a.activation = act;
        archs.push_back(a);
      }
    }
  }
  struct BlendCell {
    double p_a, p_b, c1;
  };
  std::vector<BlendCell> blends;
  if (mode == ModelMode::Spqrx) {
    for (double pa : grid.p_a) {
      for (double pb : grid.p_b) {
        for (double c : grid.c1) blends.push_back({pa, pb, c});
      }
    }
  } else {
    blends.push_back({0.0, 0.0, 0.0});
  }

  const std::size_t per_arch = blends.size();
  GridResult result;
  result.table.resize(archs.size() * per_arch);
  std::vector<std::shared_ptr<const FittedModel>> models(result.table.size());
  const auto scorer = [&](const FittedModel& m) {
    return score ? score(m) : m.training().best_val_loss;
  };

  parallel_for(archs.size(), threads, [&](std::size_t ai) {
    std::optional<FittedModel> pre;
    std::string pre_error;
    try {
      pre.emplace(fit_spqr(train, archs[ai], config));
    } catch (const std::exception& e) {
      pre_error = e.what();
    }
    for (std::size_t bi = 0; bi < per_arch; ++bi) {
      GridRow& row = result.table[ai * per_arch + bi];
      row.arch = archs[ai];
      try {
        if (mode == ModelMode::Spqrx) {
          const BlendCell& c = blends[bi];
          row.blend.emplace(c.p_a, c.p_b, c.c1, grid.c2);
        }
        if (!pre) throw NumericalError(pre_error);
        auto m = mode == ModelMode::Spqr
                     ? std::make_shared<const FittedModel>(*pre)
                     : std::make_shared<const FittedModel>(fit_spqrx_from(
                           train, *pre, archs[ai].xi_activation, *row.blend, config));
        row.training = m->training();
        row.score = scorer(*m);
        if (!std::isfinite(row.score)) throw NumericalError("non-finite score");
        models[ai * per_arch + bi] = std::move(m);
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
        row.score = kInf;
      }
    }
  });

  bool found = false;
  for (std::size_t i = 0; i < result.table.size(); ++i) {
    if (result.table[i].failed) continue;
    if (!found || result.table[i].score < result.table[result.best_index].score) {
      result.best_index = i;
      found = true;
    }
  }
  if (!found) throw NumericalError("every grid cell failed to fit");
  result.best = models[result.best_index];
  return result;
}

}  // namespace spqrx
