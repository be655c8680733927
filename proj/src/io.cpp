#include "spqrx/io.hpp"

#include "spqrx/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace spqrx {

using nlohmann::json;
using nlohmann::ordered_json;

// -------------------------------------------------------------------- CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

Eigen::Index CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<Eigen::Index>(j);
  }
  throw DataError("CSV has no column named '" + name + "'");
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& h : header) {
    if (h == name) return true;
  }
  return false;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file (a header row is required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (const auto& h : split_line(line)) table.header.push_back(trim(h));
  const std::size_t p = table.header.size();
  for (std::size_t j = 0; j < p; ++j) {
    if (table.header[j].empty()) {
      throw DataError(path + ": header column " + std::to_string(j + 1) + " has no name");
    }
  }
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++rows;
    const auto cells = split_line(line);
    if (cells.size() != p) {
      std::ostringstream msg;
      msg << path << ": row " << rows << " (line " << line_no << ") has " << cells.size()
          << " fields, expected " << p;
      throw DataError(msg.str());
    }
    for (std::size_t j = 0; j < p; ++j) {
      double v;
      if (!parse_double(cells[j], v)) {
        std::ostringstream msg;
        msg << path << ": row " << rows << " (line " << line_no << "), column '"
            << table.header[j] << "': non-numeric value '" << cells[j] << "'";
        throw DataError(msg.str());
      }
      values.push_back(v);
    }
  }
  table.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          values[i * p + j];
    }
  }
  return table;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), path_(path), columns_(header.size()) {
  if (!out_) throw DataError("cannot write CSV file '" + path + "'");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw DataError(path_ + ": row width does not match header");
  for (std::size_t j = 0; j < cells.size(); ++j) {
    if (j > 0) out_ << ',';
    out_ << cells[j];
  }
  out_ << '\n';
  if (!out_) throw DataError("write to '" + path_ + "' failed");
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  row(cells);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
  CsvWriter w(path, header);
  std::vector<double> r(static_cast<std::size_t>(values.cols()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) r[static_cast<std::size_t>(j)] = values(i, j);
    w.row(r);
  }
}

Dataset dataset_from_table(const CsvTable& table, const std::string& response,
                           const std::vector<std::string>& covariates) {
  Dataset d;
  const Eigen::Index yc = table.column(response);
  d.y = table.values.col(yc);
  std::vector<Eigen::Index> cols;
  if (covariates.empty()) {
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (static_cast<Eigen::Index>(j) != yc) {
        cols.push_back(static_cast<Eigen::Index>(j));
        d.names.push_back(table.header[j]);
      }
    }
  } else {
    for (const auto& name : covariates) {
      cols.push_back(table.column(name));
      d.names.push_back(name);
    }
  }
  if (cols.empty()) throw DataError("no covariate columns selected");
  d.x.resize(table.values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    d.x.col(static_cast<Eigen::Index>(j)) = table.values.col(cols[j]);
  }
  return d;
}

Eigen::MatrixXd covariates_for_model(const CsvTable& table, const FittedModel& model) {
  const auto& names = model.scaling().covariate_names;
  const Eigen::Index p = model.network().input_dim();
  Eigen::MatrixXd x(table.values.rows(), p);
  if (names.empty()) {
    if (table.values.cols() < p) throw DataError("CSV has fewer columns than the model inputs");
    return table.values.leftCols(p);
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    x.col(j) = table.values.col(table.column(names[static_cast<std::size_t>(j)]));
  }
  return x;
}

// ------------------------------------------------------------------- JSON

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open JSON file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
}

void write_json(const std::string& path, const ordered_json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write JSON file '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

namespace {

// Doubles are written through nlohmann's shortest round-trip formatting,
// so reading them back reproduces every bit. Non-finite values become null.
ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

template <class J>
std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + " is missing '" + key + "'");
  return obj.at(key);
}

template <class T>
T get_as(const json& v, const std::string& what) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
      if (!v.is_number()) throw ConfigError(what + " must be a number");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError(what + " must be an integer");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(what + " must be true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(what + " must be a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

template <class T>
void read_opt(const json& obj, const char* key, T& target, const std::string& where) {
  if (obj.contains(key)) target = get_as<T>(obj.at(key), where + "." + key);
}

template <class T>
std::vector<T> get_list(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(get_as<T>(v[i], what + "[" + std::to_string(i) + "]"));
  }
  return out;
}

ordered_json xi_to_json(const XiActivation& a) {
  ordered_json j;
  j["kind"] = to_string(a.kind);
  j["lo"] = a.lo;
  if (a.bounded_above()) j["hi"] = a.hi;
  return j;
}

XiActivation xi_from_json(const json& j, const std::string& where) {
  check_keys(j, {"kind", "lo", "hi"}, where);
  XiActivation a;
  a.kind = parse_xi_kind(get_as<std::string>(require(j, "kind", where), where + ".kind"));
  a.lo = get_as<double>(require(j, "lo", where), where + ".lo");
  if (a.bounded_above()) {
    a.hi = get_as<double>(require(j, "hi", where), where + ".hi");
  } else {
    a.hi = std::numeric_limits<double>::infinity();
  }
  a.validate();
  return a;
}

ordered_json blend_to_json(const BlendSpec& b) {
  ordered_json j;
  j["p_a"] = b.p_a();
  j["p_b"] = b.p_b();
  j["c1"] = b.c1();
  j["c2"] = b.c2();
  return j;
}

}  // namespace

ordered_json model_to_json(const FittedModel& model) {
  ordered_json doc;
  doc["format"] = kModelFormat;
  doc["format_version"] = kModelFormatVersion;
  doc["mode"] = to_string(model.mode());

  const SplineBasis& basis = model.basis();
  doc["basis"] = {{"num_basis", basis.num_basis()},
                  {"order", basis.order()},
                  {"interior_knots", basis.interior_knots()}};

  const Network& net = model.network();
  ordered_json jn;
  jn["input_dim"] = net.input_dim();
  jn["hidden"] = net.hidden();
  jn["num_basis"] = net.num_basis();
  jn["hidden_activation"] = to_string(net.hidden_activation());
  jn["head"] = to_string(net.head());
  if (net.head() == HeadMode::SoftmaxStar) jn["xi_activation"] = xi_to_json(net.xi_activation());
  jn["params"] = net.flatten();
  doc["network"] = jn;

  doc["blend"] = model.blend() ? blend_to_json(*model.blend()) : ordered_json(nullptr);

  const Scaling& s = model.scaling();
  ordered_json js;
  js["y_min"] = s.y_min;
  js["y_max"] = s.y_max;
  js["sqrt_transform"] = s.sqrt_transform;
  js["x_mean"] = std::vector<double>(s.x_mean.data(), s.x_mean.data() + s.x_mean.size());
  js["x_sd"] = std::vector<double>(s.x_sd.data(), s.x_sd.data() + s.x_sd.size());
  js["covariate_names"] = s.covariate_names;
  doc["scaling"] = js;

  const TrainingSummary& t = model.training();
  ordered_json jt;
  jt["seed"] = t.seed;
  jt["config_hash"] = t.config_hash;
  jt["n_train"] = t.n_train;
  jt["best_epoch"] = t.best_epoch;
  jt["best_val_loss"] = num(t.best_val_loss);
  jt["final_train_loss"] = num(t.final_train_loss);
  jt["restarts"] = t.restarts;
  doc["training"] = jt;
  return doc;
}

FittedModel model_from_json(const json& doc) {
  const std::string where = "model file";
  check_keys(doc, {"format", "format_version", "mode", "basis", "network", "blend",
                   "scaling", "training"},
             where);
  if (get_as<std::string>(require(doc, "format", where), "format") != kModelFormat) {
    throw ConfigError("not an SPQRx model file (format field mismatch)");
  }
  const int version = get_as<int>(require(doc, "format_version", where), "format_version");
  if (version != kModelFormatVersion) {
    throw ConfigError("model file format version " + std::to_string(version) +
                      " is not supported (this build reads version " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  const ModelMode mode =
      parse_model_mode(get_as<std::string>(require(doc, "mode", where), "mode"));

  const json& jb = require(doc, "basis", where);
  check_keys(jb, {"num_basis", "order", "interior_knots"}, "basis");
  auto basis = std::make_shared<const SplineBasis>(
      get_as<int>(require(jb, "num_basis", "basis"), "basis.num_basis"),
      get_as<int>(require(jb, "order", "basis"), "basis.order"),
      get_list<double>(require(jb, "interior_knots", "basis"), "basis.interior_knots"));

  const json& jn = require(doc, "network", where);
  check_keys(jn, {"input_dim", "hidden", "num_basis", "hidden_activation", "head",
                  "xi_activation", "params"},
             "network");
  const HeadMode head =
      parse_head_mode(get_as<std::string>(require(jn, "head", "network"), "network.head"));
  XiActivation xi_act;
  if (head == HeadMode::SoftmaxStar) {
    xi_act = xi_from_json(require(jn, "xi_activation", "network"), "network.xi_activation");
  }
  Network net(get_as<int>(require(jn, "input_dim", "network"), "network.input_dim"),
              get_list<int>(require(jn, "hidden", "network"), "network.hidden"),
              get_as<int>(require(jn, "num_basis", "network"), "network.num_basis"),
              parse_hidden_activation(get_as<std::string>(
                  require(jn, "hidden_activation", "network"), "network.hidden_activation")),
              head, xi_act);
  net.assign(get_list<double>(require(jn, "params", "network"), "network.params"));

  std::optional<BlendSpec> blend;
  const json& jbl = require(doc, "blend", where);
  if (!jbl.is_null()) {
    check_keys(jbl, {"p_a", "p_b", "c1", "c2"}, "blend");
    blend.emplace(get_as<double>(require(jbl, "p_a", "blend"), "blend.p_a"),
                  get_as<double>(require(jbl, "p_b", "blend"), "blend.p_b"),
                  get_as<double>(require(jbl, "c1", "blend"), "blend.c1"),
                  get_as<double>(require(jbl, "c2", "blend"), "blend.c2"));
  }

  const json& js = require(doc, "scaling", where);
  check_keys(js, {"y_min", "y_max", "sqrt_transform", "x_mean", "x_sd", "covariate_names"},
             "scaling");
  Scaling s;
  s.y_min = get_as<double>(require(js, "y_min", "scaling"), "scaling.y_min");
  s.y_max = get_as<double>(require(js, "y_max", "scaling"), "scaling.y_max");
  s.sqrt_transform = get_as<bool>(require(js, "sqrt_transform", "scaling"), "scaling.sqrt_transform");
  const auto mean = get_list<double>(require(js, "x_mean", "scaling"), "scaling.x_mean");
  const auto sd = get_list<double>(require(js, "x_sd", "scaling"), "scaling.x_sd");
  s.x_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.x_sd = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  if (js.contains("covariate_names")) {
    s.covariate_names = get_list<std::string>(js.at("covariate_names"), "scaling.covariate_names");
  }

  FittedModel model(mode, basis, std::move(net), blend, s);
  if (doc.contains("training")) {
    const json& jt = doc.at("training");
    check_keys(jt, {"seed", "config_hash", "n_train", "best_epoch", "best_val_loss",
                    "final_train_loss", "restarts"},
               "training");
    TrainingSummary& t = model.training();
    read_opt(jt, "seed", t.seed, "training");
    read_opt(jt, "config_hash", t.config_hash, "training");
    read_opt(jt, "n_train", t.n_train, "training");
    read_opt(jt, "best_epoch", t.best_epoch, "training");
    read_opt(jt, "best_val_loss", t.best_val_loss, "training");
    read_opt(jt, "final_train_loss", t.final_train_loss, "training");
    read_opt(jt, "restarts", t.restarts, "training");
  }
  return model;
}

void save_model(const FittedModel& model, const std::string& path) {
  write_json(path, model_to_json(model));
}

FittedModel load_model(const std::string& path) { return model_from_json(read_json(path)); }

// ------------------------------------------------------------ run config

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  check_keys(doc, {"mode", "response", "covariates", "architecture", "blend", "training",
                   "grid"},
             "config");
  if (doc.contains("mode")) cfg.mode = parse_model_mode(get_as<std::string>(doc.at("mode"), "mode"));
  read_opt(doc, "response", cfg.response, "config");
  if (doc.contains("covariates")) cfg.covariates = get_list<std::string>(doc.at("covariates"), "covariates");

  if (doc.contains("architecture")) {
    const json& a = doc.at("architecture");
    const std::string w = "architecture";
    check_keys(a, {"num_basis", "order", "hidden", "activation", "xi_activation"}, w);
    read_opt(a, "num_basis", cfg.arch.num_basis, w);
    read_opt(a, "order", cfg.arch.order, w);
    if (a.contains("hidden")) cfg.arch.hidden = get_list<int>(a.at("hidden"), w + ".hidden");
    if (a.contains("activation")) {
      cfg.arch.activation = parse_hidden_activation(get_as<std::string>(a.at("activation"), w + ".activation"));
    }
    if (a.contains("xi_activation")) cfg.arch.xi_activation = xi_from_json(a.at("xi_activation"), w + ".xi_activation");
  }
  if (doc.contains("blend")) {
    const json& b = doc.at("blend");
    check_keys(b, {"p_a", "p_b", "c1", "c2"}, "blend");
    double pa = cfg.blend.p_a(), pb = cfg.blend.p_b(), c1 = cfg.blend.c1(), c2 = cfg.blend.c2();
    read_opt(b, "p_a", pa, "blend");
    read_opt(b, "p_b", pb, "blend");
    read_opt(b, "c1", c1, "blend");
    read_opt(b, "c2", c2, "blend");
    cfg.blend = BlendSpec(pa, pb, c1, c2);
  }
  if (doc.contains("training")) {
    const json& t = doc.at("training");
    const std::string w = "training";
    check_keys(t, {"learning_rate", "max_epochs", "patience", "validation_fraction",
                   "density_penalty", "l1_xi", "seed", "batch_size", "lr_decay",
                   "max_restarts", "penalty_grid", "xi_init", "sqrt_transform"},
               w);
    TrainingConfig& c = cfg.training;
    read_opt(t, "learning_rate", c.learning_rate, w);
    read_opt(t, "max_epochs", c.max_epochs, w);
    read_opt(t, "patience", c.patience, w);
    read_opt(t, "validation_fraction", c.validation_fraction, w);
    read_opt(t, "density_penalty", c.density_penalty, w);
    read_opt(t, "l1_xi", c.l1_xi, w);
    read_opt(t, "seed", c.seed, w);
    read_opt(t, "batch_size", c.batch_size, w);
    read_opt(t, "lr_decay", c.lr_decay, w);
    read_opt(t, "max_restarts", c.max_restarts, w);
    read_opt(t, "penalty_grid", c.penalty_grid, w);
    read_opt(t, "xi_init", c.xi_init, w);
    read_opt(t, "sqrt_transform", c.sqrt_transform, w);
  }
  if (doc.contains("grid")) {
    const json& g = doc.at("grid");
    const std::string w = "grid";
    check_keys(g, {"num_basis", "hidden_width", "hidden_layers", "activation", "p_a", "p_b",
                   "c1", "c2"},
               w);
    GridSpec grid;
    grid.num_basis = {cfg.arch.num_basis};
    grid.hidden_width = {cfg.arch.hidden.empty() ? 32 : cfg.arch.hidden.front()};
    grid.hidden_layers = static_cast<int>(cfg.arch.hidden.size());
    grid.activation = {cfg.arch.activation};
    grid.p_a = {cfg.blend.p_a()};
    grid.p_b = {cfg.blend.p_b()};
    grid.c1 = {cfg.blend.c1()};
    grid.c2 = cfg.blend.c2();
    if (g.contains("num_basis")) grid.num_basis = get_list<int>(g.at("num_basis"), w + ".num_basis");
    if (g.contains("hidden_width")) grid.hidden_width = get_list<int>(g.at("hidden_width"), w + ".hidden_width");
    read_opt(g, "hidden_layers", grid.hidden_layers, w);
    if (g.contains("activation")) {
      grid.activation.clear();
      for (const auto& s : get_list<std::string>(g.at("activation"), w + ".activation")) {
        grid.activation.push_back(parse_hidden_activation(s));
      }
    }
    if (g.contains("p_a")) grid.p_a = get_list<double>(g.at("p_a"), w + ".p_a");
    if (g.contains("p_b")) grid.p_b = get_list<double>(g.at("p_b"), w + ".p_b");
    if (g.contains("c1")) grid.c1 = get_list<double>(g.at("c1"), w + ".c1");
    read_opt(g, "c2", grid.c2, w);
    // Reject invalid blend cells up front rather than mid-search.
    if (cfg.mode == ModelMode::Spqrx) {
      for (double pa : grid.p_a) {
        for (double pb : grid.p_b) {
          for (double c1 : grid.c1) BlendSpec(pa, pb, c1, grid.c2);
        }
      }
    }
    if (grid.cells(cfg.mode) == 0) throw ConfigError("grid has no cells");
    cfg.grid = grid;
  }
  cfg.arch.validate();
  cfg.training.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_json(path)); }

ordered_json run_config_to_json(const RunConfig& cfg) {
  ordered_json doc;
  doc["mode"] = to_string(cfg.mode);
  doc["response"] = cfg.response;
  doc["covariates"] = cfg.covariates;
  doc["architecture"] = {{"num_basis", cfg.arch.num_basis},
                         {"order", cfg.arch.order},
                         {"hidden", cfg.arch.hidden},
                         {"activation", to_string(cfg.arch.activation)},
                         {"xi_activation", xi_to_json(cfg.arch.xi_activation)}};
  doc["blend"] = blend_to_json(cfg.blend);
  const TrainingConfig& t = cfg.training;
  doc["training"] = {{"learning_rate", t.learning_rate},
                     {"max_epochs", t.max_epochs},
                     {"patience", t.patience},
                     {"validation_fraction", t.validation_fraction},
                     {"density_penalty", t.density_penalty},
                     {"l1_xi", t.l1_xi},
                     {"seed", t.seed},
                     {"batch_size", t.batch_size},
                     {"lr_decay", t.lr_decay},
                     {"max_restarts", t.max_restarts},
                     {"penalty_grid", t.penalty_grid},
                     {"xi_init", t.xi_init},
                     {"sqrt_transform", t.sqrt_transform}};
  return doc;
}

// -------------------------------------------------------- truth sidecar

void save_truth(const TruthDescriptor& truth, const std::string& path) {
  ordered_json doc;
  doc["format"] = kTruthFormat;
  doc["design"] = to_string(truth.design);
  doc["p"] = design_dim(truth.design);
  doc["n"] = truth.n;
  doc["seed"] = truth.seed;
  write_json(path, doc);
}

TruthDescriptor load_truth(const std::string& path) {
  const json doc = read_json(path);
  check_keys(doc, {"format", "design", "p", "n", "seed"}, "truth descriptor");
  if (get_as<std::string>(require(doc, "format", "truth descriptor"), "format") != kTruthFormat) {
    throw ConfigError(path + " is not a truth descriptor");
  }
  TruthDescriptor t;
  t.design = parse_design(get_as<std::string>(require(doc, "design", "truth"), "design"));
  t.n = get_as<Eigen::Index>(require(doc, "n", "truth"), "n");
  t.seed = get_as<std::uint64_t>(require(doc, "seed", "truth"), "seed");
  return t;
}

}  // namespace spqrx
