#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stackvet/datagen.hpp"
#include "stackvet/models.hpp"
#include "stackvet/training.hpp"

namespace stackvet {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitInfeasible = 3 };

/// Command-line or config problem; reported with exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// No triage policy satisfies the constraints; exit code 3.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

struct TriageConfig {
  double min_precision = 0.99;
  double min_inverse_precision = 0.95;
  double step = 0.01;
  std::size_t bins = 100;
};

struct RunConfig {
  std::uint64_t seed = 0;
  GeneratorConfig generator;
  std::string model = "CNN3";
  bool cbam = true;
  double dropout_rate = 0.25;
  std::size_t reduction_ratio = 16;
  TrainConfig train;
  std::size_t folds = 5;
  double threshold = 0.5;
  TriageConfig triage;
};

RunConfig default_run_config();
Json run_config_to_json(const RunConfig& config);
/// Overlays `doc` onto `base`; unknown keys and wrong types raise UsageError.
RunConfig apply_run_config(RunConfig base, const Json& doc);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = default_run_config());

ModelSpec spec_for(const RunConfig& config, std::size_t input_channels);

struct ScoreRow {
  std::string id;
  int label = 0;
  double score = 0.0;
};

std::string scores_csv(const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);

/// Fold models in a training output directory, ordered fold1..foldk.
std::vector<std::filesystem::path> model_files(const std::filesystem::path& dir);

/// Mean ensemble score per sample of `dataset` (checks channel compatibility).
std::vector<double> ensemble_scores(const std::vector<Model<float>>& models, const Dataset& dataset);

/// Parses and runs one command line; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stackvet
