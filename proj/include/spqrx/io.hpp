#pragma once

#include "spqrx/regression.hpp"
#include "spqrx/simulate.hpp"

#include <Eigen/Core>

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace spqrx {

// CSV dialect: comma separated, header row, dot decimal, LF line endings,
// numbers written with 17 significant digits. Unquoted fields only.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  // rows x columns

  // Index of a named column; throws DataError when absent.
  Eigen::Index column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
std::string format_number(double v);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::string path_;
  std::size_t columns_;
};

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);

// Dataset from a table: `response` column as y, the listed covariates (all
// other columns when empty) as x.
Dataset dataset_from_table(const CsvTable& table, const std::string& response = "y",
                           const std::vector<std::string>& covariates = {});
// Covariate matrix in the model's training column order.
Eigen::MatrixXd covariates_for_model(const CsvTable& table, const FittedModel& model);

// ------------------------------------------------------------ model file

inline constexpr const char* kModelFormat = "spqrx-model";
inline constexpr int kModelFormatVersion = 1;

nlohmann::ordered_json model_to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& doc);
void save_model(const FittedModel& model, const std::string& path);
FittedModel load_model(const std::string& path);

// ----------------------------------------------------------- run config

struct RunConfig {
  ModelMode mode = ModelMode::Spqrx;
  std::string response = "y";
  std::vector<std::string> covariates;  // empty = all non-response columns
  Architecture arch;
  BlendSpec blend{0.9, 0.99, 25.0, 5.0};
  TrainingConfig training;
  std::optional<GridSpec> grid;
};

// Validates the document against the schema: unknown keys and wrong types
// raise ConfigError before any computation.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

nlohmann::json read_json(const std::string& path);
void write_json(const std::string& path, const nlohmann::ordered_json& doc);

// --------------------------------------------------------- truth sidecar

inline constexpr const char* kTruthFormat = "spqrx-truth";

struct TruthDescriptor {
  Design design = Design::Lognormal;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
};

void save_truth(const TruthDescriptor& truth, const std::string& path);
TruthDescriptor load_truth(const std::string& path);

}  // namespace spqrx
