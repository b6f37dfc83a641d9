// SPDX-License-Identifier: Apache-2.0
//
// The pipeline behind each CLI command, callable in-process.

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ramen/dataset.hpp"
#include "ramen/metrics.hpp"
#include "ramen/run_config.hpp"
#include "ramen/train.hpp"

namespace ramen::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfigError = 2,
  kExitDataError = 3,
  kExitNumericError = 4,
};

/// Corpus from config.data with the configured split regime applied.
data::Dataset build_dataset(const RunConfig& config, data::SplitReport* report = nullptr);

/// Vocabulary and featurized splits of a labelled dataset.
train::TrainingData build_training_data(const RunConfig& config, const data::Dataset& dataset);

struct RunResult {
  std::vector<train::EpochLog> log;
  std::size_t best_epoch = 0;
  double val_acc = 0;  // best checkpoint
  double test_acc = 0;
  metrics::MetricsReport val_report;
  std::optional<metrics::MetricsReport> test_report;
};

/// Trains one model (repeat `repeat`, given ablation) and evaluates its best
/// checkpoint on val and test.
RunResult train_and_evaluate(const RunConfig& config, const train::TrainingData& data,
                             Ablation ablation, std::size_t repeat = 0,
                             const std::optional<std::filesystem::path>& checkpoint = {});

struct AblationRow {
  Ablation variant = Ablation::full;
  std::size_t repeat = 0;
  double val_acc = 0;
  double test_acc = 0;
};

/// Every variant x repeat, using up to `threads` concurrent runs. Rows come
/// back in variant-major order regardless of scheduling.
std::vector<AblationRow> run_ablation(const RunConfig& config, const train::TrainingData& data,
                                      std::size_t threads);

double median(std::vector<double> values);

/// variant,seed,val_acc,test_acc rows followed by one median row per variant.
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// RAMEN_THREADS (default 1); throws ConfigError when malformed.
std::size_t thread_budget();

int cmd_gen_data(const RunConfig& config, std::ostream& log);
int cmd_train(const RunConfig& config, std::ostream& log);
int cmd_eval(const RunConfig& config, std::ostream& log);
int cmd_ablate(const RunConfig& config, std::size_t threads, std::ostream& log);
int cmd_grad_check(const RunConfig& config, bool inject_fault, std::ostream& log);

}  // namespace ramen::cli
