#pragma once

#include "msatl/dataset.hpp"
#include "msatl/forge.hpp"
#include "msatl/model.hpp"
#include "msatl/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace msatl::cli {

// Flat key-value config with one section per module; every field is validated
// against module invariants before any compute starts. Unknown sections or
// keys are errors.
struct RunConfig {
  // [data]
  std::string target_dir;
  std::vector<std::string> source_dirs;
  double train_ratio = 0.6;
  double val_ratio = 0.2;
  double test_ratio = 0.2;
  // [model]
  int image_size = 64;
  int depth = 4;
  int base_width = 8;
  // [batcher]
  int sub_batch_size = 2;
  // [train]
  int epochs = 100;
  double learning_rate = 1e-3;
  double lambda = 0.3;
  std::uint64_t seed = 0;
  train::Ablation ablation = train::Ablation::none;
  nn::SupervisionMode supervision = nn::SupervisionMode::target_only;
  std::string out_dir = "runs/msatl";

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  void validate() const;

  nn::ModelConfig model_config() const;
  train::TrainConfig train_config() const;
};

struct LoadedData {
  DomainDataset target_train, target_val, target_test;
  std::vector<DomainDataset> sources;
};

// Loads target + sources from the config paths and splits the target with a
// seed derived from the run seed ("split" purpose).
LoadedData load_data(const RunConfig& rc);

struct ForgeArgs {
  std::string input, parts, keep, out;
  double mean = 127.0;
  double variance = 255.0;
  std::uint64_t seed = 0;
  int source_index = 1;
};

struct ToyArgs {
  std::string out;
  std::uint64_t seed = 0;
  ToyConfig cfg;
};

struct TrainArgs {
  std::string config;
  std::optional<std::string> ablation;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

struct EvalArgs {
  std::string config, checkpoint;
  std::optional<std::string> out;
};

struct HeatmapArgs {
  std::string checkpoint, image, out;
};

// Each command returns 0 on success and throws on failure; main maps
// std::invalid_argument to exit 2 (usage/config) and anything else to 1.
int cmd_forge(const ForgeArgs& a);
int cmd_toy(const ToyArgs& a);
int cmd_train(const TrainArgs& a);
int cmd_eval(const EvalArgs& a);
int cmd_heatmap(const HeatmapArgs& a);

}  // namespace msatl::cli
