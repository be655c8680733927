#include "commands.hpp"

#include "spqrx/error.hpp"
#include "spqrx/evaluate.hpp"
#include "spqrx/interpret.hpp"
#include "spqrx/io.hpp"
#include "spqrx/parallel.hpp"
#include "spqrx/regression.hpp"
#include "spqrx/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>

namespace spqrx::cli {
namespace {

namespace fs = std::filesystem;

// Shortest decimal that round-trips, used for column labels.
std::string label(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  p.replace_extension(suffix);
  return p.string();
}

struct Options {
  int threads = 0;

  // simulate
  std::string design = "lognormal";
  long long n = 0;
  std::uint64_t seed = 1;
  std::string out;
  std::string truth;

  // shared inputs
  std::string data;
  std::string model;
  std::string config;

  // fit
  std::string log;
  std::string grid_table;
  std::string mode;
  std::optional<std::uint64_t> fit_seed;
  std::optional<int> max_epochs;
  bool sqrt_transform = false;
  std::string response;

  // predict
  std::vector<double> quantiles;
  std::vector<double> cdf_at;
  std::vector<double> density_at;
  std::string cdf_column;
  std::string density_column;
  double max_spqr_tau = 0.999;

  // ale / vi
  std::vector<double> taus;
  bool xi = false;
  int bins = 40;

  // diagnose
  std::string out_prefix;
  int tau_samples = kIwdTauSamples;

  // bench
  std::vector<std::string> designs{"lognormal"};
  int replicates = 10;
  long long test_covariates = kTestCovariates;
  std::string replicate_out;

  // bootstrap
  std::string at;
  double level = 0.95;
};

RunConfig base_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? parse_run_config(nlohmann::json::object())
                                   : load_run_config(o.config);
  if (!o.mode.empty()) cfg.mode = parse_model_mode(o.mode);
  if (!o.response.empty()) cfg.response = o.response;
  if (o.fit_seed) cfg.training.seed = *o.fit_seed;
  if (o.max_epochs) cfg.training.max_epochs = *o.max_epochs;
  if (o.sqrt_transform) cfg.training.sqrt_transform = true;
  cfg.training.validate();
  return cfg;
}

FittedModel fit_once(const Dataset& train, const RunConfig& cfg, const TrainingConfig& tc) {
  return cfg.mode == ModelMode::Spqr ? fit_spqr(train, cfg.arch, tc)
                                     : fit_spqrx(train, cfg.arch, cfg.blend, tc);
}

void write_log(CsvWriter& w, std::size_t cell, const TrainingSummary& t) {
  for (const auto& e : t.log) {
    w.row(std::vector<std::string>{std::to_string(cell), e.phase, std::to_string(e.epoch),
                                   format_number(e.train_loss), format_number(e.val_loss),
                                   format_number(e.learning_rate),
                                   std::to_string(e.restarts)});
  }
}

const std::vector<std::string> kLogHeader{"cell",     "phase",         "epoch",   "train_loss",
                                          "val_loss", "learning_rate", "restarts"};

// ------------------------------------------------------------- commands

int cmd_simulate(const Options& o, std::ostream& out) {
  const Design design = parse_design(o.design);
  if (o.n < 1) throw ConfigError("--n must be at least 1");
  const Simulated sim = simulate({design, static_cast<Eigen::Index>(o.n), o.seed});
  std::vector<std::string> header = sim.data.names;
  header.push_back("y");
  CsvWriter w(o.out, header);
  std::vector<double> row(header.size());
  for (Eigen::Index i = 0; i < sim.data.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < sim.data.x.cols(); ++j) {
      row[static_cast<std::size_t>(j)] = sim.data.x(i, j);
    }
    row.back() = sim.data.y(i);
    w.row(row);
  }
  const std::string truth = o.truth.empty() ? sibling(o.out, ".truth.json") : o.truth;
  save_truth({design, static_cast<Eigen::Index>(o.n), o.seed}, truth);
  out << "wrote " << o.n << " rows of the " << to_string(design) << " design to " << o.out
      << " (truth: " << truth << ")\n";
  return kExitOk;
}

int cmd_fit(const Options& o, std::ostream& out) {
  const RunConfig cfg = base_config(o);
  const Dataset train = dataset_from_table(read_csv(o.data), cfg.response, cfg.covariates);
  const std::string log_path = o.log.empty() ? sibling(o.out, ".log.csv") : o.log;
  const int threads = resolve_threads(o.threads);

  if (cfg.grid) {
    const GridResult result =
        grid_search(train, cfg.mode, *cfg.grid, cfg.arch, cfg.training, {}, threads);
    save_model(*result.best, o.out);
    CsvWriter log(log_path, kLogHeader);
    for (std::size_t c = 0; c < result.table.size(); ++c) write_log(log, c, result.table[c].training);
    const std::string table_path =
        o.grid_table.empty() ? sibling(o.out, ".grid.csv") : o.grid_table;
    CsvWriter table(table_path, {"cell", "num_basis", "hidden_width", "hidden_layers",
                                 "activation", "p_a", "p_b", "c1", "c2", "score", "best",
                                 "error"});
    for (std::size_t c = 0; c < result.table.size(); ++c) {
      const GridRow& r = result.table[c];
      const auto b = [&](double (BlendSpec::*f)() const) {
        return r.blend ? format_number(((*r.blend).*f)()) : std::string("NA");
      };
      std::string error = r.error;
      std::replace(error.begin(), error.end(), ',', ';');
      std::replace(error.begin(), error.end(), '\n', ' ');
      table.row(std::vector<std::string>{
          std::to_string(c), std::to_string(r.arch.num_basis),
          std::to_string(r.arch.hidden.front()), std::to_string(r.arch.hidden.size()),
          to_string(r.arch.activation), b(&BlendSpec::p_a), b(&BlendSpec::p_b),
          b(&BlendSpec::c1), b(&BlendSpec::c2), r.failed ? "NA" : format_number(r.score),
          c == result.best_index ? "1" : "0", error});
    }
    out << "grid search over " << result.table.size() << " cells; best cell "
        << result.best_index << " (validation loss "
        << result.best->training().best_val_loss << ") saved to " << o.out << "\n";
    return kExitOk;
  }

  const FittedModel model = fit_once(train, cfg, cfg.training);
  save_model(model, o.out);
  CsvWriter log(log_path, kLogHeader);
  write_log(log, 0, model.training());
  out << to_string(model.mode()) << " model fitted on " << model.training().n_train
      << " rows (including the validation split); best epoch " << model.training().best_epoch << ", validation loss "
      << model.training().best_val_loss << ", restarts " << model.training().restarts
      << "; saved to " << o.out << "\n";
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const FittedModel model = load_model(o.model);
  const CsvTable table = read_csv(o.data);
  const Eigen::MatrixXd x = covariates_for_model(table, model);
  if (o.quantiles.empty() && o.cdf_at.empty() && o.density_at.empty() && o.cdf_column.empty() &&
      o.density_column.empty()) {
    throw ConfigError("nothing to predict: give --quantiles, --cdf, --density, "
                      "--cdf-column or --density-column");
  }
  for (double tau : o.quantiles) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw ConfigError("quantile level " + label(tau) + " is outside (0, 1)");
    }
    if (model.mode() == ModelMode::Spqr && tau > o.max_spqr_tau) {
      throw ConfigError(
          "quantile level " + label(tau) + " requested from an SPQR model: its density has "
          "compact support ending at the training maximum (" +
          label(model.scaling().y_max) + "), so quantiles this far in the tail only "
          "reproduce that bound; fit an SPQRx model, or raise --max-spqr-tau to override");
    }
  }

  std::vector<std::string> header;
  for (double tau : o.quantiles) header.push_back("q_" + label(tau));
  for (double y : o.cdf_at) header.push_back("cdf_" + label(y));
  for (double y : o.density_at) header.push_back("density_" + label(y));
  Eigen::VectorXd cdf_col, density_col;
  if (!o.cdf_column.empty()) {
    cdf_col = table.values.col(table.column(o.cdf_column));
    header.push_back("cdf_" + o.cdf_column);
  }
  if (!o.density_column.empty()) {
    density_col = table.values.col(table.column(o.density_column));
    header.push_back("density_" + o.density_column);
  }

  const std::string path = o.out;
  Eigen::MatrixXd result(x.rows(), static_cast<Eigen::Index>(header.size()));
  parallel_for(static_cast<std::size_t>(x.rows()), resolve_threads(o.threads), [&](std::size_t r) {
    const auto i = static_cast<Eigen::Index>(r);
    const auto row = x.row(i);
    Eigen::Index c = 0;
    for (double tau : o.quantiles) result(i, c++) = model.quantile(row, tau);
    for (double y : o.cdf_at) result(i, c++) = model.cdf(row, y);
    for (double y : o.density_at) result(i, c++) = model.density(row, y);
    if (cdf_col.size() > 0) result(i, c++) = model.cdf(row, cdf_col(i));
    if (density_col.size() > 0) result(i, c++) = model.density(row, density_col(i));
  });
  write_csv(path, header, result);
  out << "wrote " << x.rows() << " predictions to " << path << "\n";
  return kExitOk;
}

VIResult interpret_model(const Options& o, const FittedModel& model, const Eigen::MatrixXd& x) {
  const int threads = resolve_threads(o.threads);
  if (o.xi) {
    if (!o.taus.empty()) throw ConfigError("--xi and --taus are mutually exclusive");
    return vi_xi(model, x, o.bins, threads);
  }
  return vi_quantile_profile(model, x, o.taus.empty() ? kDefaultVITaus : o.taus, o.bins,
                             threads);
}

std::vector<std::string> covariate_labels(const FittedModel& model, Eigen::Index p) {
  std::vector<std::string> names = model.scaling().covariate_names;
  if (names.empty()) {
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  }
  return names;
}

std::vector<std::string> target_labels(const VIResult& vi) {
  if (vi.taus.empty()) return {"xi"};
  std::vector<std::string> labels;
  for (double t : vi.taus) labels.push_back(label(t));
  return labels;
}

int cmd_ale(const Options& o, std::ostream& out) {
  const FittedModel model = load_model(o.model);
  const Eigen::MatrixXd x = covariates_for_model(read_csv(o.data), model);
  const VIResult vi = interpret_model(o, model, x);
  const auto names = covariate_labels(model, x.cols());
  const auto targets = target_labels(vi);
  CsvWriter w(o.out, {"target", "covariate", "edge", "ale", "bin_count"});
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const ALEProfile& p = vi.profiles[t * static_cast<std::size_t>(x.cols()) +
                                        static_cast<std::size_t>(j)];
      const auto effects = p.centered_effects();
      for (std::size_t e = 0; e < p.edges.size(); ++e) {
        // bin_count is the number of rows in the bin ending at this edge.
        w.row(std::vector<std::string>{targets[t], names[static_cast<std::size_t>(j)],
                                       format_number(p.edges[e]), format_number(effects[e]),
                                       e == 0 ? "0" : std::to_string(p.counts[e - 1])});
      }
    }
  }
  out << "wrote ALE profiles for " << targets.size() << " target(s) and " << x.cols()
      << " covariate(s) to " << o.out << "\n";
  return kExitOk;
}

int cmd_vi(const Options& o, std::ostream& out) {
  const FittedModel model = load_model(o.model);
  const Eigen::MatrixXd x = covariates_for_model(read_csv(o.data), model);
  const VIResult vi = interpret_model(o, model, x);
  const auto names = covariate_labels(model, x.cols());
  const auto targets = target_labels(vi);
  std::vector<std::string> header{"target"};
  header.insert(header.end(), names.begin(), names.end());
  CsvWriter w(o.out, header);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    std::vector<std::string> row{targets[t]};
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      row.push_back(format_number(vi.scores(static_cast<Eigen::Index>(t), j)));
    }
    w.row(row);
  }
  // Ranking by the score averaged over targets.
  const Eigen::VectorXd mean = vi.scores.colwise().mean().transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(mean.size()));
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<Eigen::Index>(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return mean(a) > mean(b); });
  out << "variable importance (mean over targets):";
  for (Eigen::Index j : order) out << " " << names[static_cast<std::size_t>(j)] << "=" << mean(j);
  out << "\nwrote " << o.out << "\n";
  return kExitOk;
}

int cmd_diagnose(const Options& o, std::ostream& out) {
  const FittedModel model = load_model(o.model);
  const CsvTable table = read_csv(o.data);
  Dataset test;
  test.x = covariates_for_model(table, model);
  test.y = table.values.col(table.column(o.response.empty() ? "y" : o.response));
  const int threads = resolve_threads(o.threads);
  const PitResult p = pit(model, test, threads);

  {
    CsvWriter w(o.out_prefix + ".pit.csv", {"row", "u", "degenerate"});
    std::vector<bool> flag(p.u.size(), false);
    for (Eigen::Index i : p.degenerate) flag[static_cast<std::size_t>(i)] = true;
    for (std::size_t i = 0; i < p.u.size(); ++i) {
      w.row(std::vector<std::string>{std::to_string(i + 1), format_number(p.u[i]),
                                     flag[i] ? "1" : "0"});
    }
  }
  const auto write_points = [](const std::string& path, const DiagnosticPoints& d) {
    CsvWriter w(path, {"theoretical", "empirical"});
    for (std::size_t i = 0; i < d.theoretical.size(); ++i) {
      w.row(std::vector<double>{d.theoretical[i], d.empirical[i]});
    }
  };
  const DiagnosticPoints pp = pp_points(p.u);
  const DiagnosticPoints qq = qq_exponential(p.u);
  write_points(o.out_prefix + ".pp.csv", pp);
  write_points(o.out_prefix + ".qq.csv", qq);

  const double ks = ks_uniform(p.u);
  const double crit = ks_critical_95(p.u.size());
  nlohmann::ordered_json summary;
  summary["mode"] = to_string(model.mode());
  summary["n"] = p.u.size();
  summary["degenerate_pit"] = p.degenerate.size();
  summary["ks_statistic"] = ks;
  summary["ks_critical_95"] = crit;
  summary["ks_uniform_95"] = ks <= crit;
  summary["qq_excluded"] = qq.excluded;
  if (!o.truth.empty()) {
    const TruthDescriptor truth = load_truth(o.truth);
    const TrueModel tm(truth.design);
    if (test.x.cols() != design_dim(truth.design)) {
      throw DataError("test covariates do not match the truth design dimension");
    }
    const auto tc = quantile_curve(tm);
    const auto mc = quantile_curve(model);
    const MetricReport a = iwd(tc, mc, test.x, o.tau_samples, 0.0, 1.0, o.seed, threads);
    const MetricReport b = tiwd(tc, mc, test.x, o.seed, threads);
    summary["iwd"] = {{"value", a.value}, {"std_error", a.std_error}};
    summary["tiwd"] = {{"value", b.value}, {"std_error", b.std_error}};
  }
  write_json(o.out_prefix + ".summary.json", summary);
  out << "PIT on " << p.u.size() << " rows: KS " << ks << " (95% critical " << crit << "), "
      << p.degenerate.size() << " degenerate; outputs under " << o.out_prefix << ".*\n";
  return kExitOk;
}

int cmd_bench(const Options& o, std::ostream& out) {
  const RunConfig cfg = base_config(o);
  if (o.replicates < 1) throw ConfigError("--replicates must be at least 1");
  if (o.n < 2) throw ConfigError("--n must be at least 2");
  if (o.test_covariates < 1) throw ConfigError("--test-covariates must be at least 1");
  const int threads = resolve_threads(o.threads);

  CsvWriter table(o.out, {"design", "metric", "replicates", "spqr_median", "spqr_lo",
                          "spqr_hi", "spqrx_median", "spqrx_lo", "spqrx_hi"});
  std::unique_ptr<CsvWriter> per_rep;
  if (!o.replicate_out.empty()) {
    per_rep = std::make_unique<CsvWriter>(
        o.replicate_out, std::vector<std::string>{"design", "replicate", "iwd_spqr", "iwd_spqrx",
                                                  "tiwd_spqr", "tiwd_spqrx"});
  }
  for (const auto& name : o.designs) {
    BenchSettings s;
    s.design = parse_design(name);
    s.n = static_cast<Eigen::Index>(o.n);
    s.arch = cfg.arch;
    s.blend = cfg.blend;
    s.training = cfg.training;
    s.grid = cfg.grid;
    s.test_covariates = static_cast<Eigen::Index>(o.test_covariates);
    s.tau_samples = o.tau_samples;
    std::vector<ReplicateResult> reps(static_cast<std::size_t>(o.replicates));
    parallel_for(reps.size(), threads, [&](std::size_t r) {
      reps[r] = bench_replicate(s, o.seed, static_cast<int>(r), 1);
    });
    std::vector<double> iwd_a, iwd_b, tiwd_a, tiwd_b;
    for (const auto& r : reps) {
      iwd_a.push_back(r.iwd_spqr.value);
      iwd_b.push_back(r.iwd_spqrx.value);
      tiwd_a.push_back(r.tiwd_spqr.value);
      tiwd_b.push_back(r.tiwd_spqrx.value);
      if (per_rep) {
        per_rep->row(std::vector<std::string>{name, std::to_string(r.replicate),
                                              format_number(r.iwd_spqr.value),
                                              format_number(r.iwd_spqrx.value),
                                              format_number(r.tiwd_spqr.value),
                                              format_number(r.tiwd_spqrx.value)});
      }
    }
    const auto summarize = [&](const std::string& metric, const std::vector<double>& a,
                               const std::vector<double>& b) {
      table.row(std::vector<std::string>{
          name, metric, std::to_string(reps.size()), format_number(sample_quantile(a, 0.5)),
          format_number(sample_quantile(a, 0.25)), format_number(sample_quantile(a, 0.75)),
          format_number(sample_quantile(b, 0.5)), format_number(sample_quantile(b, 0.25)),
          format_number(sample_quantile(b, 0.75))});
      out << name << " " << metric << ": SPQR " << sample_quantile(a, 0.5) << " ("
          << sample_quantile(a, 0.25) << ", " << sample_quantile(a, 0.75) << ")  SPQRx "
          << sample_quantile(b, 0.5) << " (" << sample_quantile(b, 0.25) << ", "
          << sample_quantile(b, 0.75) << ")\n";
    };
    summarize("IWD", iwd_a, iwd_b);
    summarize("tIWD", tiwd_a, tiwd_b);
  }
  return kExitOk;
}

int cmd_bootstrap(const Options& o, std::ostream& out) {
  const RunConfig cfg = base_config(o);
  if (o.replicates < 2) throw ConfigError("--replicates must be at least 2");
  if (!(o.level > 0.0 && o.level < 1.0)) throw ConfigError("--level must lie in (0, 1)");
  const Dataset train = dataset_from_table(read_csv(o.data), cfg.response, cfg.covariates);
  const CsvTable at_table = read_csv(o.at);
  Eigen::MatrixXd at(at_table.values.rows(), train.x.cols());
  for (Eigen::Index j = 0; j < train.x.cols(); ++j) {
    at.col(j) = at_table.values.col(at_table.column(train.names[static_cast<std::size_t>(j)]));
  }
  for (double tau : o.quantiles) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("quantile level outside (0, 1)");
  }
  const bool with_xi = cfg.mode == ModelMode::Spqrx;
  if (!with_xi && o.quantiles.empty()) {
    throw ConfigError("SPQR bootstrap needs --quantiles (there is no xi to summarize)");
  }

  const FitProcedure fit = [&](const Dataset& d, std::uint64_t seed) {
    TrainingConfig tc = cfg.training;
    tc.seed = seed;
    return fit_once(d, cfg, tc);
  };
  const BootstrapResult boot =
      bootstrap(train, fit, o.replicates, o.seed, resolve_threads(o.threads));

  struct Quantity {
    Eigen::Index row;
    std::string name;
    double tau;
  };
  std::vector<Quantity> quantities;
  for (Eigen::Index i = 0; i < at.rows(); ++i) {
    if (with_xi) quantities.push_back({i, "xi", std::numeric_limits<double>::quiet_NaN()});
    for (double tau : o.quantiles) quantities.push_back({i, "quantile", tau});
  }
  const ModelFunctional functional = [&](const FittedModel& m) {
    std::vector<double> v;
    for (const auto& q : quantities) {
      v.push_back(q.name == "xi" ? m.xi(at.row(q.row)) : m.quantile(at.row(q.row), q.tau));
    }
    return v;
  };
  const IntervalTable t = percentile_intervals(boot, functional, o.level);
  CsvWriter w(o.out, {"row", "quantity", "tau", "lower", "median", "upper", "replicates"});
  for (std::size_t k = 0; k < quantities.size(); ++k) {
    const auto& q = quantities[k];
    w.row(std::vector<std::string>{std::to_string(q.row + 1), q.name,
                                   std::isnan(q.tau) ? "NA" : label(q.tau),
                                   format_number(t.lower[k]), format_number(t.median[k]),
                                   format_number(t.upper[k]), std::to_string(t.replicates)});
  }
  out << "bootstrap: " << o.replicates << " resamples, " << boot.failures
      << " failed refits; " << label(o.level) << " percentile intervals written to " << o.out
      << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"spqrx: semi-parametric quantile regression with extreme-value tails"};
  app.name("spqrx");
  app.require_subcommand(1);
  app.fallthrough();  // accept --threads after the subcommand too
  Options o;
  app.add_option("--threads", o.threads,
                 "worker threads (0 = SPQRX_THREADS or the hardware concurrency)")
      ->check(CLI::NonNegativeNumber);

  auto* sim = app.add_subcommand("simulate", "simulate a benchmark design to CSV");
  sim->add_option("--design", o.design, "lognormal, lomax or bounded_gp")->required();
  sim->add_option("--n", o.n, "number of rows")->required();
  sim->add_option("--seed", o.seed, "random seed");
  sim->add_option("--out", o.out, "output CSV")->required();
  sim->add_option("--truth", o.truth, "truth descriptor path (default <out>.truth.json)");

  const auto fit_options = [&](CLI::App* c) {
    c->add_option("--data", o.data, "training CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    c->add_option("--mode", o.mode, "spqr or spqrx (overrides the config)");
    c->add_option("--response", o.response, "response column (overrides the config)");
    c->add_option("--seed", o.fit_seed, "training seed (overrides the config)");
    c->add_option("--max-epochs", o.max_epochs, "epoch limit (overrides the config)");
    c->add_flag("--sqrt", o.sqrt_transform, "fit on the square root of the response");
  };

  auto* fit = app.add_subcommand("fit", "fit an SPQR or SPQRx model");
  fit_options(fit);
  fit->add_option("--out", o.out, "output model file")->required();
  fit->add_option("--log", o.log, "training log CSV (default <out>.log.csv)");
  fit->add_option("--grid-table", o.grid_table, "grid score table (default <out>.grid.csv)");

  auto* predict = app.add_subcommand("predict", "conditional quantiles, CDF or density");
  predict->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
  predict->add_option("--data", o.data, "covariate CSV")->required()->check(CLI::ExistingFile);
  predict->add_option("--quantiles", o.quantiles, "quantile levels");
  predict->add_option("--cdf", o.cdf_at, "response values for the CDF");
  predict->add_option("--density", o.density_at, "response values for the density");
  predict->add_option("--cdf-column", o.cdf_column, "CDF at each row's value of this column");
  predict->add_option("--density-column", o.density_column,
                      "density at each row's value of this column");
  predict->add_option("--max-spqr-tau", o.max_spqr_tau,
                      "largest quantile level served by SPQR models");
  predict->add_option("--out", o.out, "output CSV")->required();

  const auto interpret_options = [&](CLI::App* c) {
    c->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
    c->add_option("--data", o.data, "covariate CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--taus", o.taus, "quantile levels (default 0.05, 0.1, ..., 0.9, 0.95)");
    c->add_flag("--xi", o.xi, "profile the tail index xi(x) instead of quantiles");
    c->add_option("--bins", o.bins, "ALE bins")->check(CLI::PositiveNumber);
    c->add_option("--out", o.out, "output CSV")->required();
  };
  auto* ale_cmd = app.add_subcommand("ale", "accumulated local effect profiles");
  interpret_options(ale_cmd);
  auto* vi_cmd = app.add_subcommand("vi", "ALE-based variable importance scores");
  interpret_options(vi_cmd);

  auto* diag = app.add_subcommand("diagnose", "PIT, PP and QQ diagnostics");
  diag->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
  diag->add_option("--data", o.data, "test CSV with the response")->required()->check(CLI::ExistingFile);
  diag->add_option("--response", o.response, "response column (default y)");
  diag->add_option("--out-prefix", o.out_prefix, "prefix for the output files")->required();
  diag->add_option("--truth", o.truth, "truth descriptor; adds IWD and tIWD to the summary")
      ->check(CLI::ExistingFile);
  diag->add_option("--seed", o.seed, "seed for the tau draws of IWD/tIWD");
  diag->add_option("--tau-samples", o.tau_samples, "tau draws per row for IWD")
      ->check(CLI::PositiveNumber);

  auto* bench = app.add_subcommand("bench", "simulation study: IWD and tIWD of SPQR vs SPQRx");
  bench->add_option("--designs", o.designs, "designs to run");
  bench->add_option("--replicates", o.replicates, "replicates per design");
  bench->add_option("--n", o.n, "training rows per replicate")->default_val(10000);
  bench->add_option("--seed", o.seed, "master seed");
  bench->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  bench->add_option("--max-epochs", o.max_epochs, "epoch limit (overrides the config)");
  bench->add_option("--test-covariates", o.test_covariates, "test covariate vectors");
  bench->add_option("--tau-samples", o.tau_samples, "tau draws per row for IWD")
      ->check(CLI::PositiveNumber);
  bench->add_option("--out", o.out, "summary CSV")->required();
  bench->add_option("--replicate-out", o.replicate_out, "per-replicate CSV");

  auto* boot = app.add_subcommand("bootstrap", "bootstrap intervals for xi(x) and quantiles");
  fit_options(boot);
  boot->add_option("--at", o.at, "CSV of covariate rows to summarize")->required()->check(CLI::ExistingFile);
  boot->add_option("--quantiles", o.quantiles, "quantile levels");
  boot->add_option("--replicates", o.replicates, "bootstrap resamples")->default_val(200);
  boot->add_option("--bootstrap-seed", o.seed, "resampling seed");
  boot->add_option("--level", o.level, "interval level");
  boot->add_option("--out", o.out, "output CSV")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (fit->parsed()) return cmd_fit(o, out);
    if (predict->parsed()) return cmd_predict(o, out);
    if (ale_cmd->parsed()) return cmd_ale(o, out);
    if (vi_cmd->parsed()) return cmd_vi(o, out);
    if (diag->parsed()) return cmd_diagnose(o, out);
    if (bench->parsed()) return cmd_bench(o, out);
    if (boot->parsed()) return cmd_bootstrap(o, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace spqrx::cli
