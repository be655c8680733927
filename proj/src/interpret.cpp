#include "spqrx/interpret.hpp"

#include "spqrx/error.hpp"
#include "spqrx/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace spqrx {

double ALEProfile::value(double xj) const {
  if (edges.empty()) return 0.0;
  if (xj <= edges.front()) return effects.front() - offset;
  if (xj >= edges.back()) return effects.back() - offset;
  const auto it = std::upper_bound(edges.begin(), edges.end(), xj);
  const std::size_t hi = static_cast<std::size_t>(it - edges.begin());
  const std::size_t lo = hi - 1;
  const double t = (xj - edges[lo]) / (edges[hi] - edges[lo]);
  return effects[lo] + t * (effects[hi] - effects[lo]) - offset;
}

std::vector<double> ALEProfile::centered_effects() const {
  std::vector<double> out(effects.size());
  for (std::size_t i = 0; i < effects.size(); ++i) out[i] = effects[i] - offset;
  return out;
}

namespace {

// Type-1 quantile (inverse empirical cdf) of sorted data.
double quantile_type1(const std::vector<double>& sorted, double p) {
  const auto n = static_cast<double>(sorted.size());
  const double h = std::ceil(n * p);
  const std::size_t idx = h < 1.0 ? 0 : static_cast<std::size_t>(h) - 1;
  return sorted[std::min(idx, sorted.size() - 1)];
}

}  // namespace

std::vector<ALEProfile> ale_multi(const BatchFunction& g, const Eigen::MatrixXd& data,
                                  int j, int bins) {
  if (bins < 2) throw ConfigError("ALE needs at least 2 bins");
  if (j < 0 || j >= data.cols()) throw ConfigError("covariate index out of range");
  const Eigen::Index n = data.rows();
  std::vector<double> sorted(data.col(j).data(), data.col(j).data() + n);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (int q = 0; q <= bins; ++q) {
    edges.push_back(quantile_type1(sorted, static_cast<double>(q) / bins));
  }
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (edges.size() < 2) {
    throw DataError("covariate " + std::to_string(j + 1) +
                    " needs at least two distinct values for ALE");
  }

  // Bin b covers (edges[b], edges[b+1]]; the lowest edge joins bin 0.
  auto bin_of = [&edges](double v) {
    const auto it = std::lower_bound(edges.begin(), edges.end(), v);
    const auto pos = static_cast<std::size_t>(it - edges.begin());
    return pos == 0 ? std::size_t{0} : std::min(pos, edges.size() - 1) - 1;
  };
  std::vector<int> counts(edges.size() - 1, 0);
  for (Eigen::Index i = 0; i < n; ++i) ++counts[bin_of(data(i, j))];
  // Merge empty bins by dropping their upper edge (the last bin keeps the max).
  for (std::size_t b = counts.size(); b-- > 0;) {
    if (counts[b] == 0 && edges.size() > 2) {
      const std::size_t drop = b + 1 < edges.size() - 1 ? b + 1 : b;
      edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(drop));
      counts.assign(edges.size() - 1, 0);
      for (Eigen::Index i = 0; i < n; ++i) ++counts[bin_of(data(i, j))];
      b = counts.size();
    }
  }

  std::vector<std::size_t> bin(static_cast<std::size_t>(n));
  Eigen::MatrixXd lower = data;
  Eigen::MatrixXd upper = data;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t b = bin_of(data(i, j));
    bin[static_cast<std::size_t>(i)] = b;
    lower(i, j) = edges[b];
    upper(i, j) = edges[b + 1];
  }
  const Eigen::MatrixXd gl = g(lower);
  const Eigen::MatrixXd gu = g(upper);
  if (gl.rows() != n || gu.rows() != n || gl.cols() != gu.cols() || gl.cols() < 1) {
    throw ConfigError("ALE function returned a matrix of the wrong shape");
  }
  const Eigen::Index outputs = gl.cols();

  std::vector<ALEProfile> profiles(static_cast<std::size_t>(outputs));
  for (Eigen::Index o = 0; o < outputs; ++o) {
    ALEProfile& prof = profiles[static_cast<std::size_t>(o)];
    prof.covariate = j;
    prof.edges = edges;
    prof.counts = counts;
    std::vector<double> local(counts.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      local[bin[static_cast<std::size_t>(i)]] += gu(i, o) - gl(i, o);
    }
    prof.effects.assign(edges.size(), 0.0);
    for (std::size_t b = 0; b < counts.size(); ++b) {
      prof.effects[b + 1] = prof.effects[b] + local[b] / counts[b];
    }
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mean += prof.value(data(i, j));
    prof.offset = mean / static_cast<double>(n);
  }
  return profiles;
}

ALEProfile ale(const std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)>& g,
               const Eigen::MatrixXd& data, int j, int bins) {
  const BatchFunction batch = [&g](const Eigen::MatrixXd& rows) {
    Eigen::MatrixXd out(rows.rows(), 1);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out(i, 0) = g(rows.row(i));
    return out;
  };
  return ale_multi(batch, data, j, bins).front();
}

double vi_score(const ALEProfile& profile,
                const Eigen::Ref<const Eigen::VectorXd>& column) {
  const Eigen::Index n = column.size();
  if (n == 0) throw DataError("VI needs at least one observation");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = profile.value(column(i));
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n));
}

namespace {

VIResult vi_generic(const BatchFunction& g, const Eigen::MatrixXd& data, int bins,
                    std::vector<double> taus, Eigen::Index outputs) {
  VIResult res;
  res.taus = std::move(taus);
  const auto p = static_cast<int>(data.cols());
  res.scores.resize(outputs, p);
  std::vector<std::vector<ALEProfile>> per_cov(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    per_cov[static_cast<std::size_t>(j)] = ale_multi(g, data, j, bins);
    for (Eigen::Index o = 0; o < outputs; ++o) {
      res.scores(o, j) =
          vi_score(per_cov[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)],
                   data.col(j));
    }
  }
  for (Eigen::Index o = 0; o < outputs; ++o) {
    for (int j = 0; j < p; ++j) {
      res.profiles.push_back(
          per_cov[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)]);
    }
  }
  return res;
}

}  // namespace

VIResult vi_quantile_profile(const FittedModel& model, const Eigen::MatrixXd& data,
                             const std::vector<double>& taus, int bins, int threads) {
  const std::vector<double> levels = taus.empty() ? kDefaultVITaus : taus;
  for (double t : levels) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("VI quantile levels must lie in (0, 1)");
  }
  const BatchFunction g = [&](const Eigen::MatrixXd& rows) {
    Eigen::MatrixXd out(rows.rows(), static_cast<Eigen::Index>(levels.size()));
    constexpr Eigen::Index kChunk = 256;
    const Eigen::Index chunks = (rows.rows() + kChunk - 1) / kChunk;
    parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t c) {
      const Eigen::Index start = static_cast<Eigen::Index>(c) * kChunk;
      const Eigen::Index len = std::min(kChunk, rows.rows() - start);
      const auto dists = model.conditionals(rows.middleRows(start, len));
      for (Eigen::Index i = 0; i < len; ++i) {
        for (std::size_t t = 0; t < levels.size(); ++t) {
          out(start + i, static_cast<Eigen::Index>(t)) = model.scaling().unscale_response(
              dists[static_cast<std::size_t>(i)].quantile(levels[t]));
        }
      }
    });
    return out;
  };
  return vi_generic(g, data, bins, levels, static_cast<Eigen::Index>(levels.size()));
}

VIResult vi_xi(const FittedModel& model, const Eigen::MatrixXd& data, int bins,
               int threads) {
  if (model.mode() != ModelMode::Spqrx) {
    throw ConfigError("xi variable importance requires an SPQRx model");
  }
  (void)threads;
  const BatchFunction g = [&](const Eigen::MatrixXd& rows) {
    return Eigen::MatrixXd(model.xi_batch(rows));
  };
  return vi_generic(g, data, bins, {}, 1);
}

}  // namespace spqrx
