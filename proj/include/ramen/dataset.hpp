// SPDX-License-Identifier: Apache-2.0
//
// Corpus generation, answer vocabularies, split regimes and the on-disk
// dataset format (questions.jsonl + scenes.jsonl).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ramen/questions.hpp"
#include "ramen/scene.hpp"

namespace ramen::data {

/// Malformed or inconsistent dataset input.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::vector<Scene> scenes;  // scenes[i].id == i
  std::vector<QAItem> items;
  std::uint64_t feature_seed = 0;

  const Scene& scene(std::uint64_t id) const;
  bool operator==(const Dataset&) const = default;
};

struct CorpusConfig {
  std::size_t num_scenes = 1000;
  std::size_t questions_per_family = 2;
  std::size_t max_objects = kMaxObjects;
  std::vector<Family> families{std::begin(kAllFamilies), std::end(kAllFamilies)};
  std::uint64_t seed = 0;
};

/// Scenes 0..num_scenes-1 and their questions; item ids are assigned in
/// generation order. The feature seed is derived from the corpus seed.
Dataset generate_corpus(const CorpusConfig& config);

/// Largest corpus prefix (whole scenes) holding at most `max_items` items.
Dataset truncate_items(const Dataset& dataset, std::size_t max_items);

// ---- answer vocabulary -------------------------------------------------------

struct VocabRule {
  enum class Kind { min_count, top_k };
  Kind kind = Kind::min_count;
  std::size_t value = 9;

  static VocabRule min_count(std::size_t n) { return {Kind::min_count, n}; }
  static VocabRule top_k(std::size_t k) { return {Kind::top_k, k}; }
};

/// Closed answer set. Answers outside it are dropped from training and
/// score zero at evaluation.
class AnswerVocab {
 public:
  AnswerVocab() = default;
  explicit AnswerVocab(std::vector<std::string> answers);

  std::size_t size() const { return answers_.size(); }
  const std::vector<std::string>& answers() const { return answers_; }
  const std::string& answer(std::size_t index) const { return answers_.at(index); }
  std::optional<std::size_t> find(const std::string& answer) const;

  bool operator==(const AnswerVocab& other) const { return answers_ == other.answers_; }

 private:
  std::vector<std::string> answers_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// min_count counts train, val and unassigned items; top_k counts train and
/// unassigned items. Kept answers are ordered by count, then by name.
/// Throws DataError if nothing survives.
AnswerVocab build_answer_vocab(std::span<const QAItem> items, VocabRule rule);

// ---- splits ------------------------------------------------------------------

enum class SplitRegime { iid, compositional, changing_priors };

std::string_view to_string(SplitRegime r);
SplitRegime parse_split_regime(std::string_view name);

using ShapeColor = std::pair<ShapeKind, Color>;

/// Held-out pairs of the default compositional split: each shape is denied
/// a disjoint half of the colors in the spirit of the classic A/B conditions.
std::vector<ShapeColor> default_held_out_pairs();

struct SplitOptions {
  SplitRegime regime = SplitRegime::iid;
  std::uint64_t seed = 0;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::vector<ShapeColor> held_out = default_held_out_pairs();
  /// changing_priors: probability that an item whose answer sits in the
  /// favoured half goes to test (the other half uses 1 - skew).
  double prior_skew = 0.85;
  double min_tv = 0.3;
};

struct SplitReport {
  SplitRegime regime = SplitRegime::iid;
  std::size_t train = 0, val = 0, test = 0;
  /// Items removed because they reference held-out and regular pairs.
  std::size_t dropped = 0;
  /// changing_priors: train-vs-test total variation per family.
  std::map<Family, double> tv;
};

/// Labels every item (removing the dropped ones). Throws DataError when the
/// items cover fewer than two families or when the changing-priors split
/// misses min_tv in some family; the message carries the achieved distance.
SplitReport make_splits(Dataset& dataset, const SplitOptions& options);

/// Total variation between the answer distributions of two item sets.
double answer_tv(std::span<const QAItem* const> a, std::span<const QAItem* const> b);

// ---- files -------------------------------------------------------------------

inline constexpr const char* kQuestionsFile = "questions.jsonl";
inline constexpr const char* kScenesFile = "scenes.jsonl";

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Strict reader: unknown or missing keys and malformed lines raise
/// DataError naming the file, line and key.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace ramen::data
