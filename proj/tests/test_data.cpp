// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ramen/dataset.hpp"
#include "ramen/features.hpp"
#include "ramen/questions.hpp"
#include "ramen/random.hpp"

namespace ramen::data {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const auto p = fs::path(::testing::TempDir()) / ("ramen_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Dataset corpus(std::size_t scenes, std::uint64_t seed) {
  CorpusConfig c;
  c.num_scenes = scenes;
  c.seed = seed;
  return generate_corpus(c);
}

ObjectSpec obj(ShapeKind s, Color c, Size z, double x) {
  return {s, c, z, {x, 0.1, x + 0.1, 0.2}};
}

// ---- scenes ----------------------------------------------------------------------

TEST(Scene, DeterministicInSeedAndId) {
  EXPECT_EQ(generate_scene(7, 3, kMaxObjects), generate_scene(7, 3, kMaxObjects));
  EXPECT_NE(generate_scene(7, 3, kMaxObjects), generate_scene(7, 4, kMaxObjects));
}

TEST(Scene, ObjectCountWithinBounds) {
  std::set<std::size_t> seen;
  for (std::uint64_t id = 0; id < 500; ++id) {
    const auto s = generate_scene(1, id, 6);
    EXPECT_GE(s.objects.size(), 1u);
    EXPECT_LE(s.objects.size(), 6u);
    seen.insert(s.objects.size());
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(Scene, BoxesBarelyOverlap) {
  for (std::uint64_t id = 0; id < 1000; ++id) {
    const auto s = generate_scene(2, id, kMaxObjects);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const auto& b = s.objects[i].box;
      EXPECT_TRUE(b.x0 >= 0 && b.y0 >= 0 && b.x1 <= 1 && b.y1 <= 1);
      for (std::size_t j = i + 1; j < s.objects.size(); ++j)
        ASSERT_LT(box_iou(b, s.objects[j].box), 0.1) << "scene " << id;
    }
  }
}

TEST(Scene, IouOfKnownBoxes) {
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 0.5, 1}, {0.5, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 2, 1}, {1, 0, 3, 1}), 1.0 / 3.0);
}

// ---- features --------------------------------------------------------------------

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  return ab / std::sqrt(aa * bb);
}

TEST(Codebook, DistinctTriplesAreDissimilar) {
  const Codebook book(2048, 11);
  ASSERT_EQ(kNumTriples, 48u);
  double worst = -1;
  for (std::size_t i = 0; i <= kNumTriples; ++i)
    for (std::size_t j = i + 1; j <= kNumTriples; ++j) worst = std::max(worst, cosine(book.entry(i), book.entry(j)));
  EXPECT_LT(worst, 0.5);
}

TEST(Codebook, SharedAttributesRaiseSimilarity) {
  const Codebook book(2048, 12);
  const double two = cosine(book.entry(ShapeKind::cube, Color::red, Size::small),
                            book.entry(ShapeKind::cube, Color::red, Size::large));
  const double none = cosine(book.entry(ShapeKind::cube, Color::red, Size::small),
                             book.entry(ShapeKind::sphere, Color::blue, Size::large));
  EXPECT_NEAR(two, 2 / 5.25, 1e-12);
  EXPECT_NEAR(none, 0.0, 1e-12);
}

TEST(Features, FifteenRegionsAlways) {
  FeatureConfig fc;
  fc.visual_dim = 32;
  fc.spatial_grid = 4;
  const Featurizer f(fc);
  for (std::uint64_t id = 0; id < 50; ++id) {
    const auto r = f.featurize(generate_scene(3, id, kMaxObjects));
    EXPECT_EQ(r.num_regions, 15u);
    EXPECT_EQ(r.values.size(), 15u * fc.region_dim());
  }
}

TEST(Features, NoiselessIdenticalTriplesShareVisualPart) {
  FeatureConfig fc;
  fc.visual_dim = 64;
  fc.spatial_grid = 2;
  fc.noise_sigma = 0;
  const Featurizer f(fc);
  Scene s;
  s.objects = {obj(ShapeKind::cube, Color::red, Size::small, 0.1),
               obj(ShapeKind::cube, Color::red, Size::small, 0.5)};
  const auto r = f.featurize(s);
  const auto a = r.row(0), b = r.row(1);
  EXPECT_TRUE(std::equal(a.begin(), a.begin() + 64, b.begin()));
  EXPECT_FALSE(std::equal(a.begin() + 64, a.end(), b.begin() + 64));
}

TEST(Features, NoiseNormMatchesSigma) {
  FeatureConfig fc;
  fc.visual_dim = 2048;
  fc.spatial_grid = 2;
  fc.noise_sigma = 0.1;
  const Featurizer f(fc);
  Scene s;
  s.id = 5;
  s.objects = {obj(ShapeKind::sphere, Color::cyan, Size::large, 0.2)};
  const auto r = f.featurize(s);
  const auto clean = f.codebook().entry(ShapeKind::sphere, Color::cyan, Size::large);
  double n2 = 0;
  for (std::size_t i = 0; i < 2048; ++i) n2 += std::pow(r.row(0)[i] - clean[i], 2);
  EXPECT_NEAR(std::sqrt(n2), 0.1, 0.01);
}

TEST(Features, TooManyObjectsIsAnError) {
  FeatureConfig fc;
  fc.visual_dim = 8;
  fc.spatial_grid = 2;
  fc.num_regions = 2;
  Scene s;
  s.objects = {obj(ShapeKind::cube, Color::red, Size::small, 0.0),
               obj(ShapeKind::cube, Color::red, Size::small, 0.3),
               obj(ShapeKind::cube, Color::red, Size::small, 0.6)};
  EXPECT_THROW(Featurizer(fc).featurize(s), std::invalid_argument);
}

// ---- questions -------------------------------------------------------------------

TEST(Oracle, ForcedExistAnswer) {
  Scene s;
  s.objects = {obj(ShapeKind::cube, Color::red, Size::small, 0.1),
               obj(ShapeKind::sphere, Color::cyan, Size::large, 0.4)};
  EXPECT_EQ(answer_oracle("is there a cyan cube ?", s), "no");
  EXPECT_EQ(answer_oracle("is there a cyan sphere ?", s), "yes");
}

TEST(Oracle, ForcedCountAnswer) {
  Scene s;
  s.objects = {obj(ShapeKind::cube, Color::red, Size::small, 0.1),
               obj(ShapeKind::sphere, Color::red, Size::large, 0.4),
               obj(ShapeKind::sphere, Color::blue, Size::large, 0.7)};
  EXPECT_EQ(answer_oracle("how many red objects are there ?", s), "2");
  EXPECT_EQ(answer_oracle("how many large spheres are there ?", s), "2");
  EXPECT_EQ(answer_oracle("how many cylinders are there ?", s), "0");
}

TEST(Oracle, QueryCompareAndIntegerComparison) {
  Scene s;
  s.objects = {obj(ShapeKind::cube, Color::red, Size::small, 0.1),
               obj(ShapeKind::sphere, Color::red, Size::large, 0.4),
               obj(ShapeKind::sphere, Color::blue, Size::large, 0.7)};
  EXPECT_EQ(answer_oracle("what shape is the small object ?", s), "cube");
  EXPECT_EQ(answer_oracle("does the cube have the same color as the blue sphere ?", s), "no");
  EXPECT_EQ(answer_oracle("does the cube have the same color as the large red object ?", s), "yes");
  EXPECT_EQ(answer_oracle("are there more spheres than cubes ?", s), "yes");
  EXPECT_EQ(answer_oracle("are there fewer red objects than blue objects ?", s), "no");
  EXPECT_EQ(answer_oracle("are there the same number of cubes and blue objects ?", s), "yes");
}

TEST(Oracle, AmbiguousReferenceThrows) {
  Scene s;
  s.objects = {obj(ShapeKind::sphere, Color::red, Size::large, 0.4),
               obj(ShapeKind::sphere, Color::blue, Size::large, 0.7)};
  EXPECT_THROW(answer_oracle("what color is the sphere ?", s), std::invalid_argument);
  EXPECT_THROW(answer_oracle("what color is the cube ?", s), std::invalid_argument);
}

TEST(Parser, RejectsTextOutsideTheTemplates) {
  EXPECT_THROW(parse_question("is there a red ?"), std::invalid_argument);
  EXPECT_THROW(parse_question("is there a red cube"), std::invalid_argument);
  EXPECT_THROW(parse_question("how many teal cubes are there ?"), std::invalid_argument);
}

TEST(Parser, RenderParseRoundTrip) {
  const auto d = corpus(100, 4);
  for (const auto& it : d.items) EXPECT_EQ(render_question(parse_question(it.question)), it.question);
}

TEST(Tokens, VocabularyCoversEveryQuestion) {
  const auto d = corpus(200, 5);
  for (const auto& it : d.items) {
    EXPECT_EQ(it.tokens, tokenize(it.question));
    for (auto t : it.tokens) EXPECT_NE(t, kUnknownId) << it.question;
  }
  EXPECT_EQ(tokenize("is there a teal cube ?")[3], kUnknownId);
}

TEST(Corpus, EveryItemRevalidatesAgainstTheOracle) {
  const auto d = corpus(1000, 6);
  ASSERT_GT(d.items.size(), 9000u);
  const auto answers = all_answers();
  for (const auto& it : d.items) {
    ASSERT_EQ(answer_oracle(it.question, d.scene(it.scene_id)), it.answer) << it.question;
    ASSERT_NE(std::find(answers.begin(), answers.end(), it.answer), answers.end());
  }
}

TEST(Corpus, ZeroIsACommonCountAnswer) {
  const auto d = corpus(1000, 7);
  std::size_t count = 0, zero = 0;
  for (const auto& it : d.items)
    if (it.family == Family::count) ++count, zero += it.answer == "0";
  ASSERT_GT(count, 1000u);
  EXPECT_GE(static_cast<double>(zero) / count, 0.05);
}

TEST(Corpus, YesNoFamiliesAreBalanced) {
  const auto d = corpus(1000, 8);
  std::map<Family, std::pair<int, int>> yn;
  for (const auto& it : d.items) {
    if (it.answer == "yes") ++yn[it.family].first;
    if (it.answer == "no") ++yn[it.family].second;
  }
  for (auto f : {Family::exist, Family::compare_attribute, Family::integer_comparison}) {
    const double share = static_cast<double>(yn[f].first) / (yn[f].first + yn[f].second);
    EXPECT_NEAR(share, 0.5, 0.05) << to_string(f);
  }
}

TEST(Corpus, QuestionsAreUniquePerScene) {
  const auto d = corpus(300, 9);
  std::set<std::pair<std::uint64_t, std::string>> seen;
  for (const auto& it : d.items) EXPECT_TRUE(seen.emplace(it.scene_id, it.question).second);
}

TEST(Corpus, SameConfigSameCorpus) { EXPECT_EQ(corpus(50, 10), corpus(50, 10)); }

TEST(Corpus, TruncateKeepsWholeScenes) {
  const auto d = corpus(100, 11);
  const auto t = truncate_items(d, 95);
  EXPECT_LE(t.items.size(), 95u);
  EXPECT_EQ(t.scenes.size(), t.items.back().scene_id + 1);
  for (const auto& it : t.items) EXPECT_LT(it.scene_id, t.scenes.size());
}

// ---- answer vocabulary -----------------------------------------------------------

std::vector<QAItem> items_with(const std::vector<std::pair<std::string, int>>& counts) {
  std::vector<QAItem> out;
  for (const auto& [a, n] : counts)
    for (int i = 0; i < n; ++i) {
      QAItem it;
      it.id = out.size();
      it.answer = a;
      it.split = Split::train;
      out.push_back(it);
    }
  return out;
}

TEST(Vocab, MinCountRule) {
  const auto items = items_with({{"yes", 12}, {"no", 10}, {"2", 9}, {"teal", 3}});
  const auto v = build_answer_vocab(items, VocabRule::min_count(9));
  EXPECT_EQ(v.answers(), (std::vector<std::string>{"yes", "no", "2"}));
  EXPECT_EQ(v.find("no"), 1u);
  EXPECT_FALSE(v.find("teal"));
}

TEST(Vocab, TopKLargerThanAnswerCountKeepsAll) {
  const auto items = items_with({{"a", 2}, {"b", 1}});
  EXPECT_EQ(build_answer_vocab(items, VocabRule::top_k(10)).size(), 2u);
}

TEST(Vocab, TopKTiesBreakLexicographicallyRegardlessOfOrder) {
  auto items = items_with({{"d", 5}, {"c", 3}, {"b", 3}, {"a", 3}, {"e", 1}});
  const auto ref = build_answer_vocab(items, VocabRule::top_k(3));
  EXPECT_EQ(ref.answers(), (std::vector<std::string>{"d", "a", "b"}));
  Rng rng(12);
  for (int k = 0; k < 20; ++k) {
    shuffle(items, rng);
    EXPECT_EQ(build_answer_vocab(items, VocabRule::top_k(3)), ref);
  }
}

TEST(Vocab, TestItemsDoNotCount) {
  auto items = items_with({{"a", 2}, {"b", 1}});
  items[2].split = Split::test;
  EXPECT_EQ(build_answer_vocab(items, VocabRule::min_count(1)).answers(),
            (std::vector<std::string>{"a"}));
}

TEST(Vocab, EmptyResultIsAnError) {
  const auto items = items_with({{"a", 2}});
  EXPECT_THROW(build_answer_vocab(items, VocabRule::min_count(3)), DataError);
}

// ---- splits ----------------------------------------------------------------------

SplitReport split(Dataset& d, SplitRegime regime, std::uint64_t seed = 0) {
  SplitOptions o;
  o.regime = regime;
  o.seed = seed;
  return make_splits(d, o);
}

TEST(Splits, IidIsDeterministicAndSized) {
  auto a = corpus(300, 13), b = corpus(300, 13);
  const auto ra = split(a, SplitRegime::iid, 1);
  split(b, SplitRegime::iid, 1);
  EXPECT_EQ(a, b);
  const double n = static_cast<double>(a.items.size());
  EXPECT_EQ(ra.test, static_cast<std::size_t>(std::llround(0.15 * n)));
  EXPECT_EQ(ra.val, static_cast<std::size_t>(std::llround(0.15 * n)));
  EXPECT_EQ(ra.train + ra.val + ra.test, a.items.size());
}

TEST(Splits, CompositionalTrainAndTestPairsAreDisjoint) {
  auto d = corpus(1000, 14);
  const auto r = split(d, SplitRegime::compositional, 2);
  EXPECT_GT(r.test, 0u);
  EXPECT_GT(r.dropped, 0u);
  std::set<ShapeColor> train_pairs, test_pairs;
  for (const auto& it : d.items) {
    const auto refs = referenced_pairs(it.question, d.scene(it.scene_id));
    auto& dst = it.split == Split::test ? test_pairs : train_pairs;
    dst.insert(refs.begin(), refs.end());
  }
  for (const auto& p : test_pairs) EXPECT_EQ(train_pairs.count(p), 0u);
  const auto held = default_held_out_pairs();
  for (const auto& p : test_pairs) EXPECT_NE(std::find(held.begin(), held.end(), p), held.end());
}

TEST(Splits, ChangingPriorsReachesTheDistance) {
  auto d = corpus(1000, 15);
  const auto r = split(d, SplitRegime::changing_priors, 3);
  ASSERT_EQ(r.tv.size(), 5u);
  for (auto f : kAllFamilies) {
    std::vector<const QAItem*> train, test;
    for (const auto& it : d.items) {
      if (it.family != f) continue;
      if (it.split == Split::test) test.push_back(&it);
      if (it.split == Split::train) train.push_back(&it);
    }
    // independent total-variation computation
    std::map<std::string, double> pa, pb;
    for (auto* it : train) pa[it->answer] += 1.0 / train.size();
    for (auto* it : test) pb[it->answer] += 1.0 / test.size();
    std::set<std::string> keys;
    for (auto& [k, v] : pa) keys.insert(k);
    for (auto& [k, v] : pb) keys.insert(k);
    double tv = 0;
    for (const auto& k : keys) tv += std::abs(pa[k] - pb[k]);
    tv /= 2;
    EXPECT_GE(tv, 0.3) << to_string(f);
    EXPECT_NEAR(tv, r.tv.at(f), 1e-12) << to_string(f);
  }
}

TEST(Splits, UnreachableDistanceIsADataError) {
  auto d = corpus(200, 16);
  SplitOptions o;
  o.regime = SplitRegime::changing_priors;
  o.prior_skew = 0.5;
  try {
    make_splits(d, o);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("TV"), std::string::npos) << e.what();
  }
}

TEST(Splits, SingleFamilyIsADataError) {
  CorpusConfig c;
  c.num_scenes = 20;
  c.families = {Family::exist};
  auto d = generate_corpus(c);
  SplitOptions o;
  EXPECT_THROW(make_splits(d, o), DataError);
}

// ---- files -----------------------------------------------------------------------

TEST(Files, EmptyDatasetRoundTrips) {
  const auto dir = temp_dir("empty");
  Dataset d;
  write_dataset(d, dir);
  EXPECT_EQ(read_dataset(dir), d);
}

TEST(Files, CorpusRoundTripsBitExact) {
  auto d = truncate_items(corpus(120, 17), 1000);
  split(d, SplitRegime::iid, 4);
  const auto a = temp_dir("rt_a"), b = temp_dir("rt_b");
  write_dataset(d, a);
  const auto back = read_dataset(a);
  EXPECT_EQ(back, d);
  write_dataset(back, b);
  EXPECT_EQ(slurp(a / kQuestionsFile), slurp(b / kQuestionsFile));
  EXPECT_EQ(slurp(a / kScenesFile), slurp(b / kScenesFile));
}

TEST(Files, UnknownFieldIsRejectedByName) {
  const auto dir = temp_dir("unknown");
  write_dataset(corpus(3, 18), dir);
  auto text = slurp(dir / kQuestionsFile);
  text.replace(text.find("\"answer\""), 8, "\"colour\":1,\"answer\"");
  std::ofstream(dir / kQuestionsFile, std::ios::binary | std::ios::trunc) << text;
  try {
    read_dataset(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos) << e.what();
  }
}

TEST(Files, MalformedLineReportsItsNumber) {
  const auto dir = temp_dir("malformed");
  write_dataset(corpus(3, 19), dir);
  std::ofstream(dir / kQuestionsFile, std::ios::app) << "{not json\n";
  try {
    read_dataset(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(kQuestionsFile), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace ramen::data
