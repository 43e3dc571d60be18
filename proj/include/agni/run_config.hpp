#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agni/dataprep.hpp"
#include "agni/eval.hpp"
#include "agni/model.hpp"
#include "agni/raster.hpp"

namespace agni {

struct EvalOptions {
  std::vector<double> thresholds{0.5};
  int months = 4;
  int month_days = 28;
  std::vector<int> windows{91, 182, 273, 364};
  // Scores every sample with its own label; checks the evaluation plumbing.
  bool oracle = false;
};

// Everything a subcommand needs, resolved from the config file and flags.
// Stages share one workspace: <out>/store, <out>/dataset/{train,test},
// <out>/model, <out>/eval, <out>/ablation, <out>/sweep. `paths` entries
// redirect a stage's input elsewhere.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "agni_run";
  WorldConfig world;
  PrepConfig prep;
  TrainConfig train;
  Arch arch = Arch::kAgni;
  EvalOptions eval;
  std::optional<std::filesystem::path> store_path;
  std::optional<std::filesystem::path> dataset_path;
  std::optional<std::filesystem::path> model_path;

  std::filesystem::path store_dir() const { return store_path.value_or(out / "store"); }
  std::filesystem::path dataset_dir() const { return dataset_path.value_or(out / "dataset"); }
  std::filesystem::path model_dir() const { return model_path.value_or(out / "model"); }

  // The world uses the master seed; training draws a seed derived from it.
  WorldConfig resolved_world() const;
  TrainConfig resolved_train() const;
  ExperimentConfig experiment() const;

  void validate() const;
};

// Throws ConfigError naming the offending key on unknown keys or bad types.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

// Writes <dir>/run_config.json.
void write_run_config(const std::filesystem::path& dir, const RunConfig& cfg);

nlohmann::json world_config_json(const WorldConfig& cfg);
WorldConfig world_config_from_json(const nlohmann::json& j);

std::vector<int> parse_windows(const std::string& csv);

}  // namespace agni
