// SPDX-License-Identifier: Apache-2.0
//
// Learning-rate schedule, Adamax, and the epoch loop with validation-based
// early stopping and resumable checkpoints.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ramen/dataset.hpp"
#include "ramen/features.hpp"
#include "ramen/metrics.hpp"
#include "ramen/model.hpp"
#include "ramen/random.hpp"

namespace ramen::train {

// ---- schedule ----------------------------------------------------------------

/// Warm-up lr = warmup_rate * epoch / lr_scale for the first warmup_epochs,
/// then plateau_lr through plateau_until_epoch, then multiplied by
/// decay_factor every decay_every epochs.
struct Schedule {
  std::size_t warmup_epochs = 4;
  double warmup_rate = 2.5;
  double lr_scale = 1e4;
  double plateau_lr = 5e-4;
  std::size_t plateau_until_epoch = 10;
  double decay_factor = 0.25;
  std::size_t decay_every = 2;

  void validate() const;
  bool operator==(const Schedule&) const = default;
};

/// 1-based epoch; throws std::invalid_argument for epoch 0.
double lr_at_epoch(const Schedule& s, std::size_t epoch);

// ---- Adamax ------------------------------------------------------------------

struct AdamaxConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamaxConfig&) const = default;
};

template <typename T>
struct AdamaxState {
  AdamaxConfig config;
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m;  // one per parameter, parameter order
  std::vector<std::vector<T>> u;

  bool operator==(const AdamaxState&) const = default;
};

template <typename T>
AdamaxState<T> adamax_init(const nn::NamedTensors<T>& params, AdamaxConfig config = {});

/// t += 1; m = b1 m + (1 - b1) g; u = max(b2 u, |g|);
/// theta -= lr / (1 - b1^t) * m / (u + eps). Parameters without a gradient
/// are treated as having a zero gradient. Throws NumericError naming the
/// first parameter with a non-finite gradient before touching any state.
template <typename T>
void adamax_step(AdamaxState<T>& state, const nn::NamedTensors<T>& params, double lr);

// ---- training data -----------------------------------------------------------

/// One question ready for batching.
struct Example {
  std::uint64_t id = 0;
  std::size_t scene = 0;
  data::Family family = data::Family::exist;
  std::vector<std::size_t> tokens;
  std::string answer;
  std::optional<std::size_t> label;  // index in the answer vocabulary
};

/// Featurized scenes plus the examples of each split.
struct TrainingData {
  std::size_t num_regions = 0;
  std::size_t visual_dim = 0;
  std::size_t spatial_dim = 0;
  std::size_t region_dim = 0;
  std::vector<std::vector<float>> scene_regions;  // [num_regions * region_dim] per scene
  data::AnswerVocab vocab;
  std::vector<Example> train, val, test;
};

/// Featurizes every scene (with the dataset's feature seed, overriding
/// `features.seed`) and buckets items by split; unassigned items are
/// skipped. Training examples with out-of-vocabulary answers are dropped;
/// evaluation examples keep them (unlabelled, always scored wrong).
TrainingData prepare_data(const data::Dataset& dataset, const data::AnswerVocab& vocab,
                          const data::FeatureConfig& features);

/// Model config matching the data: region widths and answer count filled in.
RamenConfig fit_config(RamenConfig config, const TrainingData& data);

// ---- trainer -----------------------------------------------------------------

struct TrainerConfig {
  std::size_t batch_size = 64;
  std::size_t max_epochs = 20;
  std::size_t early_stop_patience = 5;
  std::uint64_t seed = 0;
  /// Question-only baseline: every region is replaced by zeros.
  bool zero_regions = false;
  /// Check every op output for NaN/inf (slow).
  bool check_finite = false;

  void validate() const;
  bool operator==(const TrainerConfig&) const = default;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
  bool operator==(const EpochLog&) const = default;
};

/// Header line and rows of the learning-curve CSV.
std::string learning_curve_csv(const std::vector<EpochLog>& log);

template <typename T>
struct Snapshot {
  std::vector<std::vector<T>> params;
  std::vector<std::vector<T>> buffers;
  bool operator==(const Snapshot&) const = default;
};

template <typename T>
Snapshot<T> take_snapshot(const RamenModel<T>& model);
template <typename T>
void restore_snapshot(RamenModel<T>& model, const Snapshot<T>& snapshot);

/// Everything needed to continue a run exactly where it stopped.
template <typename T>
struct TrainProgress {
  std::size_t epochs_done = 0;
  std::vector<EpochLog> log;
  double best_val_acc = -1;
  std::size_t best_epoch = 0;
  std::size_t epochs_since_best = 0;
  bool stopped = false;
  std::string rng_state;
  AdamaxState<T> optimizer;
  std::optional<Snapshot<T>> best;
};

template <typename T>
class Trainer {
 public:
  Trainer(RamenModel<T>& model, const TrainingData& data, TrainerConfig config,
          Schedule schedule = {});

  /// Trains epochs_done+1 .. max_epochs unless early stopping triggers, then
  /// leaves the model holding the best-validation parameters. With
  /// `checkpoint_path`, the resumable state is saved after every epoch.
  const TrainProgress<T>& run(const std::optional<std::filesystem::path>& checkpoint_path = {});

  /// Runs a single epoch (no early-stopping bookkeeping beyond the log).
  EpochLog run_epoch();

  const TrainProgress<T>& progress() const { return progress_; }
  const TrainerConfig& config() const { return config_; }

  void save(const std::filesystem::path& path) const;
  /// Restores model, optimizer, RNG and progress; throws if the model config
  /// differs from the checkpoint's.
  void resume(const std::filesystem::path& path);

 private:
  RamenModel<T>& model_;
  const TrainingData& data_;
  TrainerConfig config_;
  Schedule schedule_;
  nn::NamedTensors<T> params_;
  Rng rng_;
  TrainProgress<T> progress_;
};

/// Batched inference (eval phase, partial last batch kept) over examples.
template <typename T>
std::vector<std::string> predict_answers(RamenModel<T>& model, const TrainingData& data,
                                         const std::vector<Example>& examples,
                                         std::size_t batch_size = 64, bool zero_regions = false);

template <typename T>
std::vector<metrics::PredictionRecord> evaluate_examples(RamenModel<T>& model,
                                                         const TrainingData& data,
                                                         const std::vector<Example>& examples,
                                                         std::size_t batch_size = 64,
                                                         bool zero_regions = false);

/// Simple accuracy of the model on `examples` (0 for an empty list).
template <typename T>
double accuracy(RamenModel<T>& model, const TrainingData& data,
                const std::vector<Example>& examples, std::size_t batch_size = 64,
                bool zero_regions = false);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace ramen::train
