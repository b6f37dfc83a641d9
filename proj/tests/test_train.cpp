// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ramen/checkpoint.hpp"
#include "ramen/train.hpp"

namespace ramen::train {
namespace {

namespace fs = std::filesystem;

// ---- schedule ----------------------------------------------------------------------

TEST(Schedule, WarmupValuesAreExact) {
  const Schedule s;
  EXPECT_EQ(lr_at_epoch(s, 1), 2.5e-4);
  EXPECT_EQ(lr_at_epoch(s, 2), 5e-4);
  EXPECT_EQ(lr_at_epoch(s, 3), 7.5e-4);
  EXPECT_EQ(lr_at_epoch(s, 4), 1.0e-3);
}

TEST(Schedule, PlateauThenDecay) {
  const Schedule s;
  for (std::size_t e = 5; e <= 10; ++e) EXPECT_EQ(lr_at_epoch(s, e), 5e-4) << e;
  EXPECT_EQ(lr_at_epoch(s, 11), 1.25e-4);
  EXPECT_EQ(lr_at_epoch(s, 12), 1.25e-4);
  EXPECT_EQ(lr_at_epoch(s, 13), 5e-4 * 0.25 * 0.25);
}

TEST(Schedule, StrictlyPositiveAndNonIncreasingAfterWarmup) {
  const Schedule s;
  for (std::size_t e = 1; e <= 200; ++e) {
    EXPECT_GT(lr_at_epoch(s, e), 0.0) << e;
    if (e > 4) {
      EXPECT_LE(lr_at_epoch(s, e), lr_at_epoch(s, e - 1)) << e;
    }
  }
}

TEST(Schedule, EpochsAreOneBased) { EXPECT_THROW(lr_at_epoch(Schedule{}, 0), std::invalid_argument); }

// ---- Adamax ------------------------------------------------------------------------

nn::NamedTensors<double> scalar_param(double v) {
  return {{"theta", Tensor<double>({1}, {v}, true)}};
}

TEST(Adamax, ZeroGradientLeavesParametersUnchanged) {
  auto p = scalar_param(0.3);
  p[0].second.grad_buffer()[0] = 0;
  auto st = adamax_init(p);
  adamax_step(st, p, 1e-3);
  EXPECT_EQ(p[0].second[0], 0.3);
}

TEST(Adamax, MissingGradientCountsAsZero) {
  auto p = scalar_param(0.3);
  auto st = adamax_init(p);
  adamax_step(st, p, 1e-3);
  EXPECT_EQ(p[0].second[0], 0.3);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adamax, FirstStepMovesByLearningRate) {
  auto p = scalar_param(1.0);
  p[0].second.grad_buffer()[0] = 1;
  auto st = adamax_init(p);
  adamax_step(st, p, 1e-3);
  const double expected = 1.0 - 1e-3 * (0.1 / 0.1) / (1 + 1e-8);
  EXPECT_NEAR(p[0].second[0], expected, 1e-15);
  EXPECT_NEAR(1.0 - p[0].second[0], 1e-3, 1e-10);
}

struct ScalarAdamax {
  double m = 0, u = 0, theta;
  int t = 0;
  void step(double g, double lr) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    u = std::max(0.999 * u, std::abs(g));
    theta -= lr / (1 - std::pow(0.9, t)) * m / (u + 1e-8);
  }
};

TEST(Adamax, MatchesScalarReference) {
  const std::vector<double> grads = {0.7, 0.7, -1.3, 0.01, 2.5};
  const std::vector<double> lrs = {2.5e-4, 5e-4, 7.5e-4, 1e-3, 5e-4};
  auto p = scalar_param(-0.4);
  auto st = adamax_init(p);
  ScalarAdamax ref{0, 0, -0.4};
  for (std::size_t k = 0; k < grads.size(); ++k) {
    p[0].second.clear_grad();
    p[0].second.grad_buffer()[0] = grads[k];
    adamax_step(st, p, lrs[k]);
    ref.step(grads[k], lrs[k]);
    EXPECT_NEAR(p[0].second[0], ref.theta, 1e-12) << "step " << k;
    EXPECT_NEAR(st.m[0][0], ref.m, 1e-12);
    EXPECT_NEAR(st.u[0][0], ref.u, 1e-12);
  }
}

TEST(Adamax, MatchesScalarReferenceOnRandomStreams) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto p = scalar_param(normal(rng));
    auto st = adamax_init(p);
    ScalarAdamax ref{0, 0, p[0].second[0]};
    for (int k = 0; k < 100; ++k) {
      const double g = normal(rng) * (uniform01(rng) < 0.1 ? 100 : 1);
      p[0].second.clear_grad();
      p[0].second.grad_buffer()[0] = g;
      adamax_step(st, p, 1e-3);
      ref.step(g, 1e-3);
    }
    EXPECT_NEAR(p[0].second[0], ref.theta, 1e-12) << seed;
  }
}

TEST(Adamax, NonFiniteGradientLeavesStateUntouched) {
  nn::NamedTensors<double> p = {{"a", Tensor<double>({1}, {1.0}, true)},
                                {"b", Tensor<double>({1}, {2.0}, true)}};
  p[0].second.grad_buffer()[0] = 1;
  p[1].second.grad_buffer()[0] = std::numeric_limits<double>::quiet_NaN();
  auto st = adamax_init(p);
  const auto before = st;
  try {
    adamax_step(st, p, 1e-3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(st, before);
  EXPECT_EQ(p[0].second[0], 1.0);
}

// ---- trainer -----------------------------------------------------------------------

RamenConfig tiny_widths() {
  RamenConfig c;
  c.embedding_dim = 8;
  c.question_dim = 16;
  c.projector_width = 24;
  c.aggregator_hidden = 12;
  c.pre_classifier_width = 24;
  return c;
}

data::FeatureConfig tiny_features() {
  data::FeatureConfig f;
  f.visual_dim = 16;
  f.spatial_grid = 2;
  f.num_regions = 10;
  return f;
}

TrainingData make_data(std::size_t scenes, std::uint64_t seed) {
  data::CorpusConfig cc;
  cc.num_scenes = scenes;
  cc.seed = seed;
  auto ds = data::generate_corpus(cc);
  data::SplitOptions so;
  so.seed = seed;
  data::make_splits(ds, so);
  const auto vocab = data::build_answer_vocab(ds.items, data::VocabRule::min_count(1));
  return prepare_data(ds, vocab, tiny_features());
}

TrainerConfig trainer_config(std::size_t epochs, std::uint64_t seed = 5) {
  TrainerConfig t;
  t.batch_size = 16;
  t.max_epochs = epochs;
  t.early_stop_patience = 100;
  t.seed = seed;
  return t;
}

fs::path temp_file(const std::string& name) {
  const auto p = fs::path(::testing::TempDir()) / ("ramen_" + name);
  fs::remove(p);
  return p;
}

TEST(PrepareData, DropsUnlabelledTrainExamplesOnly) {
  data::CorpusConfig cc;
  cc.num_scenes = 40;
  auto ds = data::generate_corpus(cc);
  data::SplitOptions so;
  data::make_splits(ds, so);
  const auto vocab = data::build_answer_vocab(ds.items, data::VocabRule::top_k(2));
  const auto td = prepare_data(ds, vocab, tiny_features());
  for (const auto& ex : td.train) EXPECT_TRUE(ex.label.has_value());
  std::size_t val_items = 0;
  for (const auto& it : ds.items) val_items += it.split == data::Split::val;
  EXPECT_EQ(td.val.size(), val_items);
  EXPECT_EQ(td.scene_regions.size(), ds.scenes.size());
  EXPECT_EQ(td.scene_regions[0].size(), 10u * td.region_dim);
}

TEST(Trainer, ZeroEpochsLeavesNoTrace) {
  const auto data = make_data(30, 1);
  RamenModel<float> model(fit_config(tiny_widths(), data), 2);
  Trainer<float> trainer(model, data, trainer_config(0));
  const auto ckpt = temp_file("zero.bin");
  EXPECT_TRUE(trainer.run(ckpt).log.empty());
  EXPECT_FALSE(fs::exists(ckpt));
}

TEST(Trainer, FixedSeedGivesBitIdenticalCurves) {
  const auto data = make_data(40, 3);
  auto once = [&] {
    RamenModel<float> model(fit_config(tiny_widths(), data), 4);
    Trainer<float> trainer(model, data, trainer_config(3));
    return trainer.run().log;
  };
  const auto a = once(), b = once();
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(learning_curve_csv(a), learning_curve_csv(b));
}

TEST(Trainer, DifferentShuffleSeedChangesTheCurve) {
  const auto data = make_data(40, 3);
  auto once = [&](std::uint64_t seed) {
    RamenModel<float> model(fit_config(tiny_widths(), data), 4);
    Trainer<float> trainer(model, data, trainer_config(1, seed));
    return trainer.run().log;
  };
  EXPECT_NE(once(1)[0].train_loss, once(2)[0].train_loss);
}

TEST(Trainer, EarlyStoppingRestoresTheBestEpoch) {
  const auto data = make_data(40, 6);
  RamenModel<float> model(fit_config(tiny_widths(), data), 7);
  auto tc = trainer_config(12);
  tc.early_stop_patience = 2;
  Trainer<float> trainer(model, data, tc);
  const auto& p = trainer.run();
  ASSERT_TRUE(p.best.has_value());
  EXPECT_EQ(take_snapshot(model), *p.best);
  EXPECT_DOUBLE_EQ(accuracy(model, data, data.val, tc.batch_size), p.best_val_acc);
  if (p.stopped) {
    EXPECT_EQ(p.epochs_done, p.best_epoch + 2);
  }
}

TEST(Trainer, TooFewExamplesForABatch) {
  auto data = make_data(30, 8);
  data.train.resize(3);
  RamenModel<float> model(fit_config(tiny_widths(), data), 9);
  Trainer<float> trainer(model, data, trainer_config(1));
  EXPECT_THROW(trainer.run(), data::DataError);
}

TEST(Trainer, MemorizesASmallSingleFamilyCorpus) {
  data::CorpusConfig cc;
  cc.num_scenes = 220;
  cc.questions_per_family = 1;
  cc.families = {data::Family::query_attribute};
  cc.seed = 10;
  auto ds = data::truncate_items(data::generate_corpus(cc), 200);
  for (auto& it : ds.items) it.split = data::Split::train;
  const auto vocab = data::build_answer_vocab(ds.items, data::VocabRule::min_count(1));
  auto features = tiny_features();
  features.visual_dim = 64;
  auto data = prepare_data(ds, vocab, features);
  ASSERT_EQ(data.train.size(), 200u);
  data.val = data.train;

  RamenConfig widths;
  widths.embedding_dim = 128;
  widths.question_dim = 256;
  widths.projector_width = 512;
  widths.aggregator_hidden = 256;
  widths.pre_classifier_width = 512;
  RamenModel<float> model(fit_config(widths, data), 11);
  auto tc = trainer_config(30);
  tc.batch_size = 16;
  Trainer<float> trainer(model, data, tc);
  trainer.run();
  EXPECT_GE(accuracy(model, data, data.train), 0.99);
}

TEST(Trainer, OneBatchLossKeepsFalling) {
  auto data = make_data(40, 20);
  data.train.resize(16);
  RamenModel<float> model(fit_config(tiny_widths(), data), 21);
  Trainer<float> trainer(model, data, trainer_config(30));
  const auto& log = trainer.run().log;
  ASSERT_EQ(log.size(), 30u);
  for (std::size_t e = 3; e < log.size(); ++e)
    EXPECT_LE(log[e].train_loss, 1.05 * log[e - 1].train_loss) << learning_curve_csv(log);
  EXPECT_LT(log.back().train_loss, log[2].train_loss);
}

// ---- checkpoints -------------------------------------------------------------------

TEST(Checkpoint, SaveLoadIsExact) {
  const auto data = make_data(30, 12);
  RamenModel<double> model(fit_config(tiny_widths(), data), 13);
  Trainer<double> trainer(model, data, trainer_config(2));
  trainer.run();
  const auto path = temp_file("exact.bin");
  trainer.save(path);
  const auto c = load_checkpoint<double>(path);
  EXPECT_EQ(c.model, take_snapshot(model));
  EXPECT_EQ(c.config, model.config());
  EXPECT_EQ(c.answers, data.vocab.answers());
  EXPECT_EQ(c.trainer, trainer.config());
  EXPECT_EQ(c.progress.log, trainer.progress().log);
  EXPECT_EQ(c.progress.optimizer, trainer.progress().optimizer);
  EXPECT_EQ(c.progress.best, trainer.progress().best);
  EXPECT_EQ(checkpoint_scalar_size(path), sizeof(double));
  EXPECT_THROW(load_checkpoint<float>(path), CheckpointError);
}

TEST(Checkpoint, ResumeMatchesStraightThroughTraining) {
  const auto data = make_data(40, 14);
  const auto config = fit_config(tiny_widths(), data);

  RamenModel<float> straight(config, 15);
  Trainer<float> full(straight, data, trainer_config(3));
  full.run();

  const auto path = temp_file("resume.bin");
  {
    RamenModel<float> first(config, 15);
    Trainer<float> part(first, data, trainer_config(2));
    part.run(path);
  }
  RamenModel<float> resumed(config, 999);
  Trainer<float> rest(resumed, data, trainer_config(3));
  rest.resume(path);
  rest.run();

  EXPECT_EQ(take_snapshot(resumed), take_snapshot(straight));
  EXPECT_EQ(rest.progress().log, full.progress().log);
  EXPECT_EQ(rest.progress().optimizer, full.progress().optimizer);
  EXPECT_EQ(rest.progress().rng_state, full.progress().rng_state);
}

TEST(Checkpoint, MismatchedConfigListsTheFields) {
  const auto data = make_data(30, 16);
  RamenModel<float> model(fit_config(tiny_widths(), data), 17);
  Trainer<float> trainer(model, data, trainer_config(1));
  trainer.run();
  const auto path = temp_file("mismatch.bin");
  trainer.save(path);

  auto other = fit_config(tiny_widths(), data);
  other.projector_width = 20;
  other.ablation = Ablation::mean_pool;
  RamenModel<float> wrong(other, 17);
  Trainer<float> t2(wrong, data, trainer_config(1));
  try {
    t2.resume(path);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("projector_width"), std::string::npos) << msg;
    EXPECT_NE(msg.find("ablation"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto data = make_data(30, 18);
  RamenModel<float> model(fit_config(tiny_widths(), data), 19);
  Trainer<float> trainer(model, data, trainer_config(1));
  trainer.run();
  const auto path = temp_file("corrupt.bin");
  trainer.save(path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-5, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_THROW(load_checkpoint<float>(path), CheckpointError);
  fs::resize_file(path, 20);
  EXPECT_THROW(load_checkpoint<float>(path), CheckpointError);
}

TEST(LearningCurve, CsvHeaderAndRows) {
  const std::vector<EpochLog> log = {{1, 2.5e-4, 1.5, 0.25, 0.5}};
  EXPECT_EQ(learning_curve_csv(log), "epoch,lr,train_loss,train_acc,val_acc\n1,0.00025,1.5,0.25,0.5\n");
}

}  // namespace
}  // namespace ramen::train
