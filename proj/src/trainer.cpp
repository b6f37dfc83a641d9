// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ramen/checkpoint.hpp"
#include "ramen/train.hpp"

namespace ramen::train {
namespace {

constexpr std::uint64_t kShuffleStream = 0x7a11ULL;

template <typename T>
ModelInput<T> make_batch(const TrainingData& data, const std::vector<Example>& examples,
                         std::span<const std::size_t> rows, bool zero_regions) {
  ModelInput<T> in;
  in.num_regions = data.num_regions;
  const std::size_t block = data.num_regions * data.region_dim;
  in.regions = Tensor<T>({rows.size() * data.num_regions, data.region_dim});
  auto dst = in.regions.data();
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& ex = examples[rows[b]];
    if (!zero_regions) {
      const auto& src = data.scene_regions[ex.scene];
      std::transform(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * block),
                     [](float v) { return static_cast<T>(v); });
    }
    in.tokens.push_back(ex.tokens);
  }
  return in;
}

}  // namespace

TrainingData prepare_data(const data::Dataset& dataset, const data::AnswerVocab& vocab,
                          const data::FeatureConfig& features) {
  data::FeatureConfig cfg = features;
  cfg.seed = dataset.feature_seed;
  const data::Featurizer featurizer(cfg);
  TrainingData td;
  td.num_regions = cfg.num_regions;
  td.visual_dim = cfg.visual_dim;
  td.spatial_dim = cfg.spatial_dim();
  td.region_dim = cfg.region_dim();
  td.vocab = vocab;
  for (const auto& scene : dataset.scenes) td.scene_regions.push_back(featurizer.featurize(scene).values);
  for (const auto& it : dataset.items) {
    Example ex{it.id, static_cast<std::size_t>(it.scene_id), it.family, it.tokens, it.answer,
               vocab.find(it.answer)};
    if (ex.scene >= td.scene_regions.size()) {
      throw data::DataError("item " + std::to_string(it.id) + " refers to missing scene " +
                            std::to_string(it.scene_id));
    }
    switch (it.split) {
      case data::Split::train:
        if (ex.label) td.train.push_back(std::move(ex));
        break;
      case data::Split::val: td.val.push_back(std::move(ex)); break;
      case data::Split::test: td.test.push_back(std::move(ex)); break;
      case data::Split::unassigned: break;
    }
  }
  return td;
}

RamenConfig fit_config(RamenConfig config, const TrainingData& data) {
  config.visual_dim = data.visual_dim;
  config.spatial_dim = data.spatial_dim;
  config.num_answers = data.vocab.size();
  config.vocab_size = data::question_vocabulary().size();
  return config;
}

void TrainerConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("trainer: batch_size must be >= 2");
  if (early_stop_patience == 0) throw std::invalid_argument("trainer: early_stop_patience must be >= 1");
}

std::string learning_curve_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,train_acc,val_acc\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.lr, e.train_loss,
                  e.train_acc, e.val_acc);
    os << buf;
  }
  return os.str();
}

template <typename T>
Snapshot<T> take_snapshot(const RamenModel<T>& model) {
  Snapshot<T> s;
  for (const auto& [name, t] : model.parameters())
    s.params.emplace_back(t.values().begin(), t.values().end());
  for (const auto& [name, t] : model.buffers())
    s.buffers.emplace_back(t.values().begin(), t.values().end());
  return s;
}

template <typename T>
void restore_snapshot(RamenModel<T>& model, const Snapshot<T>& snapshot) {
  auto copy = [](nn::NamedTensors<T> targets, const std::vector<std::vector<T>>& values) {
    if (targets.size() != values.size()) {
      throw DimensionError("restore_snapshot: " + std::to_string(values.size()) +
                           " tensors for " + std::to_string(targets.size()));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      auto dst = targets[i].second.data();
      if (dst.size() != values[i].size()) {
        throw DimensionError("restore_snapshot: size mismatch for " + targets[i].first);
      }
      std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
  };
  copy(model.parameters(), snapshot.params);
  copy(model.buffers(), snapshot.buffers);
}

// ---- inference ---------------------------------------------------------------

template <typename T>
std::vector<std::string> predict_answers(RamenModel<T>& model, const TrainingData& data,
                                         const std::vector<Example>& examples,
                                         std::size_t batch_size, bool zero_regions) {
  model.set_phase(nn::Phase::eval);
  std::vector<std::string> out;
  out.reserve(examples.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    rows.resize(std::min(batch_size, examples.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    Tape<T> tape;
    const auto logits = model.forward(tape, make_batch<T>(data, examples, rows, zero_regions));
    for (auto k : predict(logits)) out.push_back(data.vocab.answer(k));
  }
  return out;
}

template <typename T>
std::vector<metrics::PredictionRecord> evaluate_examples(RamenModel<T>& model,
                                                         const TrainingData& data,
                                                         const std::vector<Example>& examples,
                                                         std::size_t batch_size,
                                                         bool zero_regions) {
  const auto answers = predict_answers(model, data, examples, batch_size, zero_regions);
  std::vector<metrics::PredictionRecord> records;
  records.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    records.push_back({ex.id, std::string(data::to_string(ex.family)), answers[i], {ex.answer}});
  }
  return records;
}

template <typename T>
double accuracy(RamenModel<T>& model, const TrainingData& data,
                const std::vector<Example>& examples, std::size_t batch_size, bool zero_regions) {
  if (examples.empty()) return 0;
  return metrics::simple_accuracy(evaluate_examples(model, data, examples, batch_size, zero_regions));
}

// ---- trainer -----------------------------------------------------------------

template <typename T>
Trainer<T>::Trainer(RamenModel<T>& model, const TrainingData& data, TrainerConfig config,
                    Schedule schedule)
    : model_(model),
      data_(data),
      config_(config),
      schedule_(schedule),
      params_(model.parameters()),
      rng_(derive_seed(config.seed, {kShuffleStream})) {
  config_.validate();
  schedule_.validate();
  if (model.config().num_answers != data.vocab.size()) {
    throw DimensionError("trainer: model predicts " + std::to_string(model.config().num_answers) +
                         " answers, vocabulary has " + std::to_string(data.vocab.size()));
  }
  progress_.optimizer = adamax_init(params_);
  progress_.rng_state = rng_state(rng_);
}

template <typename T>
EpochLog Trainer<T>::run_epoch() {
  const std::size_t n = data_.train.size();
  const std::size_t bs = config_.batch_size;
  if (n < bs) {
    throw data::DataError("train split has " + std::to_string(n) +
                          " usable examples, fewer than one batch of " + std::to_string(bs));
  }
  if (data_.val.empty()) throw data::DataError("val split is empty");

  EpochLog log;
  log.epoch = progress_.epochs_done + 1;
  log.lr = lr_at_epoch(schedule_, log.epoch);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng_);

  model_.set_phase(nn::Phase::train);
  const std::size_t batches = n / bs;
  double loss_sum = 0;
  std::size_t hits = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::span<const std::size_t> rows(order.data() + b * bs, bs);
    std::vector<std::vector<std::size_t>> answers;
    for (auto r : rows) answers.push_back({*data_.train[r].label});

    Tape<T> tape;
    tape.set_check_finite(config_.check_finite);
    const auto logits = model_.forward(tape, make_batch<T>(data_, data_.train, rows, config_.zero_regions));
    const auto loss = model_.answer_loss(tape, logits, answers);
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss at epoch " + std::to_string(log.epoch) + ", step " +
                         std::to_string(b + 1));
    }
    tape.backward(loss);
    adamax_step(progress_.optimizer, params_, log.lr);
    for (auto& [name, p] : params_) p.clear_grad();

    loss_sum += value;
    const auto pred = predict(logits);
    for (std::size_t i = 0; i < bs; ++i) hits += pred[i] == answers[i].front() ? 1 : 0;
  }
  log.train_loss = loss_sum / static_cast<double>(batches);
  log.train_acc = static_cast<double>(hits) / static_cast<double>(batches * bs);
  log.val_acc = accuracy(model_, data_, data_.val, bs, config_.zero_regions);

  progress_.epochs_done = log.epoch;
  progress_.log.push_back(log);
  progress_.rng_state = rng_state(rng_);
  return log;
}

template <typename T>
const TrainProgress<T>& Trainer<T>::run(const std::optional<std::filesystem::path>& checkpoint_path) {
  while (!progress_.stopped && progress_.epochs_done < config_.max_epochs) {
    const auto log = run_epoch();
    if (log.val_acc > progress_.best_val_acc) {
      progress_.best_val_acc = log.val_acc;
      progress_.best_epoch = log.epoch;
      progress_.epochs_since_best = 0;
      progress_.best = take_snapshot(model_);
    } else if (++progress_.epochs_since_best >= config_.early_stop_patience) {
      progress_.stopped = true;
    }
    if (checkpoint_path) save(*checkpoint_path);
  }
  if (progress_.best) restore_snapshot(model_, *progress_.best);
  return progress_;
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) const {
  Checkpoint<T> c;
  c.config = model_.config();
  c.answers = data_.vocab.answers();
  c.trainer = config_;
  c.schedule = schedule_;
  for (const auto& [name, t] : params_) c.param_names.push_back(name);
  for (const auto& [name, t] : model_.buffers()) c.buffer_names.push_back(name);
  c.model = take_snapshot(model_);
  c.progress = progress_;
  save_checkpoint(c, path);
}

template <typename T>
void Trainer<T>::resume(const std::filesystem::path& path) {
  auto c = load_checkpoint<T>(path);
  require_same_config(model_.config(), c.config);
  if (c.answers != data_.vocab.answers()) {
    throw CheckpointError("checkpoint answer vocabulary differs from the training data's");
  }
  std::vector<std::string> names;
  for (const auto& [name, t] : params_) names.push_back(name);
  if (names != c.param_names) throw CheckpointError("checkpoint parameter names differ from the model's");
  restore_snapshot(model_, c.model);
  progress_ = std::move(c.progress);
  set_rng_state(rng_, progress_.rng_state);
}

template class Trainer<float>;
template class Trainer<double>;

#define RAMEN_INSTANTIATE_TRAIN(T)                                                              \
  template Snapshot<T> take_snapshot(const RamenModel<T>&);                                     \
  template void restore_snapshot(RamenModel<T>&, const Snapshot<T>&);                           \
  template std::vector<std::string> predict_answers(RamenModel<T>&, const TrainingData&,        \
                                                    const std::vector<Example>&, std::size_t,   \
                                                    bool);                                      \
  template std::vector<metrics::PredictionRecord> evaluate_examples(                            \
      RamenModel<T>&, const TrainingData&, const std::vector<Example>&, std::size_t, bool);     \
  template double accuracy(RamenModel<T>&, const TrainingData&, const std::vector<Example>&,    \
                           std::size_t, bool);

RAMEN_INSTANTIATE_TRAIN(float)
RAMEN_INSTANTIATE_TRAIN(double)

}  // namespace ramen::train
