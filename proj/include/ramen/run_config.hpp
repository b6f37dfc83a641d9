// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document with a strict schema covering paths,
// corpus generation, featurization, splits, model, trainer and schedule.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ramen/dataset.hpp"
#include "ramen/features.hpp"
#include "ramen/model.hpp"
#include "ramen/train.hpp"

namespace ramen::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { single, double_ };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view name);

struct Paths {
  std::string dataset = "data";
  std::string output = "out";
  /// Checkpoint read by `eval`; defaults to <output>/checkpoint.bin.
  std::string checkpoint;
  /// Checkpoint to continue from in `train`.
  std::string resume;
};

struct DataSettings {
  data::CorpusConfig corpus;     // corpus.seed comes from RunConfig::seed
  data::FeatureConfig features;  // features.seed comes from the dataset
  data::VocabRule vocab = data::VocabRule::min_count(9);
  data::SplitOptions split;      // regime and seed come from RunConfig
};

struct RunConfig {
  std::uint64_t seed = 0;
  data::SplitRegime split_regime = data::SplitRegime::iid;
  Precision precision = Precision::single;
  Paths paths;
  DataSettings data;
  RamenConfig model;
  train::TrainerConfig trainer;
  train::Schedule schedule;
  std::vector<Ablation> ablation_variants{std::begin(kAllAblations), std::end(kAllAblations)};
  std::size_t ablation_repeats = 3;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Strict parse: unknown keys, wrong types and bad enum names raise
/// ConfigError naming the dotted key path. Missing keys keep defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Complete configuration (every key), parseable by parse_run_config.
std::string run_config_json(const RunConfig& config);

/// Seeds of repeat `r`: model initialization and batch shuffling.
std::uint64_t model_seed(const RunConfig& config, std::size_t repeat);
std::uint64_t trainer_seed(const RunConfig& config, std::size_t repeat);

}  // namespace ramen::cli
