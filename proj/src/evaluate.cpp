#include "spqrx/evaluate.hpp"

#include "spqrx/error.hpp"
#include "spqrx/parallel.hpp"
#include "spqrx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spqrx {

QuantileCurve quantile_curve(const FittedModel& model) {
  return [&model](const Eigen::Ref<const Eigen::RowVectorXd>& x,
                  const std::vector<double>& taus, std::vector<double>& out) {
    const ConditionalDistribution dist = model.conditional(x);
    out.resize(taus.size());
    for (std::size_t k = 0; k < taus.size(); ++k) {
      out[k] = model.scaling().unscale_response(dist.quantile(taus[k]));
    }
  };
}

QuantileCurve quantile_curve(const TrueModel& truth) {
  return [truth](const Eigen::Ref<const Eigen::RowVectorXd>& x,
                 const std::vector<double>& taus, std::vector<double>& out) {
    out.resize(taus.size());
    for (std::size_t k = 0; k < taus.size(); ++k) out[k] = truth.quantile(x, taus[k]);
  };
}

MetricReport iwd(const QuantileCurve& truth, const QuantileCurve& model,
                 const Eigen::MatrixXd& test_x, int tau_samples, double tau_lo,
                 double tau_hi, std::uint64_t seed, int threads,
                 const std::string& name) {
  if (!(tau_lo >= 0.0 && tau_lo < tau_hi && tau_hi <= 1.0)) {
    throw ConfigError("IWD needs 0 <= tau_lo < tau_hi <= 1");
  }
  if (tau_samples < 1) throw ConfigError("IWD needs at least one tau sample");
  const Eigen::Index n = test_x.rows();
  if (n == 0) throw DataError("IWD needs test covariates");
  std::vector<double> per_row(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    std::vector<double> taus(static_cast<std::size_t>(tau_samples));
    for (int k = 0; k < tau_samples; ++k) {
      taus[static_cast<std::size_t>(k)] =
          tau_lo + (tau_hi - tau_lo) * (k + rng.uniform()) / tau_samples;
    }
    std::vector<double> qt, qm;
    const auto row = test_x.row(static_cast<Eigen::Index>(i));
    truth(row, taus, qt);
    model(row, taus, qm);
    double sum = 0.0;
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const double d = std::fabs(qt[k] - qm[k]);
      if (!std::isfinite(d)) {
        std::ostringstream msg;
        msg << name << ": non-finite quantile at tau=" << taus[k] << " for test row "
            << i + 1 << " (truth " << qt[k] << ", model " << qm[k] << ")";
        throw NumericalError(msg.str());
      }
      sum += d;
    }
    per_row[i] = sum / tau_samples;
  });
  MetricReport r;
  r.name = name;
  r.tau_lo = tau_lo;
  r.tau_hi = tau_hi;
  r.n_x = n;
  r.n_tau = tau_samples;
  double mean = 0.0;
  for (double v : per_row) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : per_row) ss += (v - mean) * (v - mean);
  r.value = mean;
  r.std_error = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n))
                      : 0.0;
  return r;
}

MetricReport tiwd(const QuantileCurve& truth, const QuantileCurve& model,
                  const Eigen::MatrixXd& test_x, std::uint64_t seed, int threads) {
  return iwd(truth, model, test_x, kTiwdTauSamples, 0.999, 1.0, seed, threads, "tIWD");
}

PitResult pit(const FittedModel& model, const Dataset& test, int threads) {
  if (test.x.rows() != test.y.size()) throw DataError("test covariates and responses differ in length");
  PitResult res;
  const Eigen::Index n = test.rows();
  res.u.resize(static_cast<std::size_t>(n));
  constexpr Eigen::Index kChunk = 256;
  const Eigen::Index chunks = (n + kChunk - 1) / kChunk;
  parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kChunk;
    const Eigen::Index len = std::min(kChunk, n - start);
    const auto dists = model.conditionals(test.x.middleRows(start, len));
    for (Eigen::Index i = 0; i < len; ++i) {
      const double s = model.scaling().scale_response(test.y(start + i));
      res.u[static_cast<std::size_t>(start + i)] = dists[static_cast<std::size_t>(i)].cdf(s);
    }
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    if (res.u[static_cast<std::size_t>(i)] >= 1.0) res.degenerate.push_back(i);
  }
  return res;
}

DiagnosticPoints pp_points(const std::vector<double>& u) {
  DiagnosticPoints d;
  d.empirical = u;
  std::sort(d.empirical.begin(), d.empirical.end());
  const double n = static_cast<double>(u.size());
  for (std::size_t i = 1; i <= u.size(); ++i) d.theoretical.push_back(i / (n + 1.0));
  return d;
}

DiagnosticPoints qq_exponential(const std::vector<double>& u) {
  DiagnosticPoints d;
  for (double v : u) {
    if (v >= 1.0) {
      ++d.excluded;
    } else {
      d.empirical.push_back(-std::log1p(-v));
    }
  }
  std::sort(d.empirical.begin(), d.empirical.end());
  const double n = static_cast<double>(d.empirical.size());
  for (std::size_t i = 1; i <= d.empirical.size(); ++i) {
    d.theoretical.push_back(-std::log1p(-static_cast<double>(i) / (n + 1.0)));
  }
  return d;
}

double ks_uniform(std::vector<double> u) {
  if (u.empty()) throw DataError("KS statistic of an empty sample");
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double v = std::clamp(u[i], 0.0, 1.0);
    d = std::max({d, (i + 1) / n - v, v - i / n});
  }
  return d;
}

double ks_critical_95(std::size_t n) { return 1.36 / std::sqrt(static_cast<double>(n)); }

BootstrapResult bootstrap(const Dataset& train, const FitProcedure& fit, int n_boot,
                          std::uint64_t seed, int threads) {
  if (n_boot < 1) throw ConfigError("bootstrap needs at least one replicate");
  const Eigen::Index n = train.rows();
  if (n < 2) throw DataError("bootstrap needs at least two rows");
  BootstrapResult res;
  res.models.resize(static_cast<std::size_t>(n_boot));
  res.errors.resize(static_cast<std::size_t>(n_boot));
  parallel_for(static_cast<std::size_t>(n_boot), threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, 1000 + b));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    for (auto& r : rows) r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    try {
      res.models[b] =
          std::make_shared<const FittedModel>(fit(train.subset(rows), derive_seed(seed, b)));
    } catch (const std::exception& e) {
      res.errors[b] = e.what();
    }
  });
  for (const auto& m : res.models) {
    if (!m) ++res.failures;
  }
  return res;
}

double sample_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

IntervalTable percentile_intervals(const BootstrapResult& boot,
                                   const ModelFunctional& functional, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("interval level must lie in (0, 1)");
  std::vector<std::vector<double>> draws;
  for (const auto& m : boot.models) {
    if (m) draws.push_back(functional(*m));
  }
  if (draws.empty()) throw NumericalError("no successful bootstrap replicates");
  const std::size_t k = draws.front().size();
  IntervalTable t;
  t.level = level;
  t.replicates = draws.size();
  const double alpha = (1.0 - level) / 2.0;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> col;
    for (const auto& d : draws) {
      if (d.size() != k) throw ConfigError("functional returned inconsistent lengths");
      col.push_back(d[j]);
    }
    t.lower.push_back(sample_quantile(col, alpha));
    t.median.push_back(sample_quantile(col, 0.5));
    t.upper.push_back(sample_quantile(col, 1.0 - alpha));
  }
  return t;
}

// ------------------------------------------------------------ benchmark

ReplicateResult bench_replicate(const BenchSettings& settings, std::uint64_t seed,
                                int replicate, int threads) {
  const std::uint64_t stream = derive_seed(seed, static_cast<std::uint64_t>(replicate));
  ReplicateResult r;
  r.replicate = replicate;
  const Simulated sim = simulate({settings.design, settings.n, derive_seed(stream, 1)});
  r.train = sim.data;
  TrainingConfig cfg = settings.training;
  cfg.seed = derive_seed(stream, 2);

  if (settings.grid) {
    r.spqr = grid_search(r.train, ModelMode::Spqr, *settings.grid, settings.arch, cfg, {},
                         threads)
                 .best;
    r.spqrx = grid_search(r.train, ModelMode::Spqrx, *settings.grid, settings.arch, cfg,
                          {}, threads)
                  .best;
  } else {
    auto pre = std::make_shared<const FittedModel>(fit_spqr(r.train, settings.arch, cfg));
    r.spqrx = std::make_shared<const FittedModel>(fit_spqrx_from(
        r.train, *pre, settings.arch.xi_activation, settings.blend, cfg));
    r.spqr = std::move(pre);
  }

  const Eigen::MatrixXd test_x = sample_covariates(design_dim(settings.design),
                                                   settings.test_covariates,
                                                   derive_seed(stream, 3));
  const QuantileCurve truth = quantile_curve(sim.truth);
  const QuantileCurve q_spqr = quantile_curve(*r.spqr);
  const QuantileCurve q_spqrx = quantile_curve(*r.spqrx);
  const std::uint64_t s_iwd = derive_seed(stream, 4);
  const std::uint64_t s_tiwd = derive_seed(stream, 5);
  r.iwd_spqr = iwd(truth, q_spqr, test_x, settings.tau_samples, 0.0, 1.0, s_iwd, threads);
  r.iwd_spqrx = iwd(truth, q_spqrx, test_x, settings.tau_samples, 0.0, 1.0, s_iwd, threads);
  r.tiwd_spqr = tiwd(truth, q_spqr, test_x, s_tiwd, threads);
  r.tiwd_spqrx = tiwd(truth, q_spqrx, test_x, s_tiwd, threads);
  return r;
}

}  // namespace spqrx
