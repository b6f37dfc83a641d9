// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "ramen/metrics.hpp"
#include "ramen/random.hpp"

namespace ramen::metrics {
namespace {

PredictionRecord rec(std::string family, std::string pred, std::vector<std::string> gold) {
  static std::uint64_t id = 0;
  return {id++, std::move(family), std::move(pred), std::move(gold)};
}

std::vector<std::string> ten(std::string_view answer, int hits, std::string_view other = "zzz") {
  std::vector<std::string> g(10, std::string(other));
  for (int i = 0; i < hits; ++i) g[i] = answer;
  return g;
}

TEST(Simple, AllNoneAndSome) {
  std::vector<PredictionRecord> r = {rec("a", "yes", {"yes"}), rec("a", "no", {"no"})};
  EXPECT_EQ(simple_accuracy(r), 1.0);
  r = {rec("a", "yes", {"no"}), rec("a", "2", {"3"})};
  EXPECT_EQ(simple_accuracy(r), 0.0);
  r = {rec("a", "1", {"1"}), rec("a", "2", {"2"}), rec("a", "3", {"3"}), rec("a", "4", {"5"})};
  EXPECT_EQ(simple_accuracy(r), 0.75);
}

TEST(Simple, NormalizesCaseAndWhitespace) {
  std::vector<PredictionRecord> r = {rec("a", " Yes\t", {"yes"})};
  EXPECT_EQ(simple_accuracy(r), 1.0);
  EXPECT_EQ(normalize_answer("  Red Cube \n"), "red cube");
}

TEST(Simple, RejectsEmptyAndMultiGold) {
  EXPECT_THROW(simple_accuracy({}), std::invalid_argument);
  std::vector<PredictionRecord> r = {rec("a", "x", ten("x", 3))};
  EXPECT_THROW(simple_accuracy(r), std::invalid_argument);
}

TEST(Consensus, ClampsAtThreeMatches) {
  std::vector<PredictionRecord> r = {rec("a", "cat", ten("cat", 5))};
  EXPECT_EQ(vqa_10choose3(r), 1.0);
  r = {rec("a", "cat", ten("cat", 2))};
  EXPECT_DOUBLE_EQ(vqa_10choose3(r), 2.0 / 3.0);
  r = {rec("a", "cat", ten("dog", 10))};
  EXPECT_EQ(vqa_10choose3(r), 0.0);
}

TEST(Consensus, RequiresTenAnswers) {
  std::vector<PredictionRecord> r = {rec("a", "x", {"x", "x"})};
  EXPECT_THROW(vqa_10choose3(r), std::invalid_argument);
  EXPECT_THROW(record_score(r[0]), std::invalid_argument);
}

TEST(MeanPerType, SingleFamilyEqualsSimple) {
  std::vector<PredictionRecord> r = {rec("count", "1", {"1"}), rec("count", "2", {"3"}),
                                     rec("count", "0", {"0"})};
  EXPECT_DOUBLE_EQ(mean_per_type(r), simple_accuracy(r));
}

TEST(MeanPerType, AveragesFamiliesEqually) {
  std::vector<PredictionRecord> r = {rec("exist", "yes", {"yes"}), rec("exist", "no", {"no"}),
                                     rec("exist", "no", {"no"}), rec("count", "1", {"1"}),
                                     rec("count", "1", {"2"})};
  EXPECT_DOUBLE_EQ(mean_per_type(r), 0.75);
}

TEST(NormalizedMeanPerType, AveragesAnswersWithinFamily) {
  std::vector<PredictionRecord> r = {rec("f", "a", {"a"}), rec("f", "x", {"a"}),
                                     rec("f", "b", {"b"})};
  EXPECT_DOUBLE_EQ(normalized_mean_per_type(r), 0.75);
}

TEST(NormalizedMeanPerType, UniformAnswersMatchMpt) {
  std::vector<PredictionRecord> r = {rec("f", "a", {"a"}), rec("f", "x", {"b"}),
                                     rec("g", "c", {"c"}), rec("g", "c", {"d"})};
  EXPECT_DOUBLE_EQ(normalized_mean_per_type(r), mean_per_type(r));
}

TEST(Harmonic, ZeroFamilyGivesZero) {
  std::vector<PredictionRecord> r = {rec("f", "a", {"a"}), rec("g", "x", {"c"})};
  EXPECT_EQ(harmonic_mean_per_type(r), 0.0);
  r = {rec("f", "a", {"a"}), rec("g", "c", {"c"}), rec("g", "x", {"c"})};
  EXPECT_DOUBLE_EQ(harmonic_mean_per_type(r), 2.0 / (1.0 / 1.0 + 1.0 / 0.5));
}

TEST(CanonicalGold, MostFrequentThenSmallest) {
  auto r = rec("f", "", {"b", "b", "a", "a", "c", "c", "c", "d", "d", "d"});
  EXPECT_EQ(canonical_gold(r), "c");
  r.gold = {"b", "b", "b", "a", "a", "a", "e", "e", "f", "g"};
  EXPECT_EQ(canonical_gold(r), "a");
}

TEST(Report, WarnsAboutMissingFamiliesAndSerializes) {
  std::vector<PredictionRecord> r = {rec("exist", "yes", {"yes"}), rec("count", "1", {"2"})};
  const std::vector<std::string> expected = {"exist", "count", "compare_attribute"};
  const auto report = evaluate_records(r, expected, true);
  ASSERT_EQ(report.warnings.size(), 1u);
  EXPECT_NE(report.warnings[0].find("compare_attribute"), std::string::npos);
  EXPECT_FALSE(report.vqa10c3.has_value());
  const auto j = nlohmann::json::parse(report_json(report));
  for (const char* k : {"simple", "mpt", "nmpt", "harmonic_mpt"}) EXPECT_TRUE(j["overall"].contains(k)) << k;
  EXPECT_EQ(j["per_family"]["count"]["count"], 1);
}

// ---- brute-force oracles -------------------------------------------------------

std::string oracle_norm(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) out += static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
  return out;
}

double oracle_score(const PredictionRecord& r) {
  const auto p = oracle_norm(r.predicted);
  int hits = 0;
  for (const auto& g : r.gold) hits += oracle_norm(g) == p;
  if (r.gold.size() == 1) return hits;
  return hits >= 3 ? 1.0 : hits / 3.0;
}

std::string oracle_canonical(const PredictionRecord& r) {
  std::vector<std::string> g;
  for (const auto& x : r.gold) g.push_back(oracle_norm(x));
  std::sort(g.begin(), g.end());
  std::string best;
  long best_n = -1;
  for (const auto& x : g) {
    const long n = std::count(g.begin(), g.end(), x);
    if (n > best_n) best = x, best_n = n;  // first in sorted order wins ties
  }
  return best;
}

double oracle_mean(const std::vector<PredictionRecord>& rs) {
  double s = 0;
  for (const auto& r : rs) s += oracle_score(r);
  return s / rs.size();
}

double oracle_mpt(const std::vector<PredictionRecord>& rs) {
  std::vector<std::string> fams;
  for (const auto& r : rs)
    if (std::find(fams.begin(), fams.end(), r.family) == fams.end()) fams.push_back(r.family);
  double total = 0;
  for (const auto& f : fams) {
    std::vector<PredictionRecord> sub;
    std::copy_if(rs.begin(), rs.end(), std::back_inserter(sub), [&](auto& r) { return r.family == f; });
    total += oracle_mean(sub);
  }
  return total / fams.size();
}

double oracle_nmpt(const std::vector<PredictionRecord>& rs) {
  std::vector<std::string> fams;
  for (const auto& r : rs)
    if (std::find(fams.begin(), fams.end(), r.family) == fams.end()) fams.push_back(r.family);
  double total = 0;
  for (const auto& f : fams) {
    std::vector<std::string> answers;
    for (const auto& r : rs)
      if (r.family == f && std::find(answers.begin(), answers.end(), oracle_canonical(r)) == answers.end())
        answers.push_back(oracle_canonical(r));
    double fam = 0;
    for (const auto& a : answers) {
      std::vector<PredictionRecord> sub;
      std::copy_if(rs.begin(), rs.end(), std::back_inserter(sub),
                   [&](auto& r) { return r.family == f && oracle_canonical(r) == a; });
      fam += oracle_mean(sub);
    }
    total += fam / answers.size();
  }
  return total / fams.size();
}

std::vector<PredictionRecord> random_corpus(Rng& rng, std::size_t n, bool consensus) {
  const std::vector<std::string> families = {"exist", "count", "query_attribute",
                                             "compare_attribute", "integer_comparison"};
  const std::vector<std::string> pool = {"yes", "no", "0", "1", "2", "red", "cube", " Red", "YES "};
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    PredictionRecord r;
    r.question_id = i;
    r.family = families[uniform_index(rng, families.size())];
    // skew the gold distribution so answers are not uniform within a family
    auto draw = [&] { return pool[uniform_index(rng, uniform01(rng) < 0.5 ? 3 : pool.size())]; };
    const std::size_t golds = consensus ? 10 : 1;
    for (std::size_t g = 0; g < golds; ++g) r.gold.push_back(draw());
    r.predicted = uniform01(rng) < 0.5 ? r.gold[uniform_index(rng, golds)] : draw();
    out.push_back(std::move(r));
  }
  return out;
}

TEST(Oracle, RandomSingleAnswerCorpora) {
  for (std::uint64_t c = 0; c < 50; ++c) {
    Rng rng(derive_seed(1, {c}));
    const auto rs = random_corpus(rng, 200, false);
    EXPECT_NEAR(simple_accuracy(rs), oracle_mean(rs), 1e-12) << c;
    EXPECT_NEAR(mean_per_type(rs), oracle_mpt(rs), 1e-12) << c;
    EXPECT_NEAR(normalized_mean_per_type(rs), oracle_nmpt(rs), 1e-12) << c;
  }
}

TEST(Oracle, RandomConsensusCorpora) {
  for (std::uint64_t c = 0; c < 50; ++c) {
    Rng rng(derive_seed(2, {c}));
    const auto rs = random_corpus(rng, 200, true);
    EXPECT_NEAR(vqa_10choose3(rs), oracle_mean(rs), 1e-12) << c;
    EXPECT_NEAR(mean_per_type(rs), oracle_mpt(rs), 1e-12) << c;
    EXPECT_NEAR(normalized_mean_per_type(rs), oracle_nmpt(rs), 1e-12) << c;
  }
}

TEST(Oracle, MetricsIgnoreRecordOrder) {
  Rng rng(3);
  auto rs = random_corpus(rng, 200, false);
  const double mpt = mean_per_type(rs), nmpt = normalized_mean_per_type(rs);
  shuffle(rs, rng);
  EXPECT_NEAR(mean_per_type(rs), mpt, 1e-12);
  EXPECT_NEAR(normalized_mean_per_type(rs), nmpt, 1e-12);
}

}  // namespace
}  // namespace ramen::metrics
