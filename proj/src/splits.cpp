// SPDX-License-Identifier: Apache-2.0

#include "ramen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ramen/random.hpp"

namespace ramen::data {
namespace {

constexpr std::uint64_t kSceneStream = 0x5ce7eULL;
constexpr std::uint64_t kQuestionSeedStream = 0x9a11ULL;
constexpr std::uint64_t kFeatureStream = 0xfea7ULL;
constexpr std::uint64_t kSplitStream = 0x5b17ULL;

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

// Moves round(fraction * size) of the train-side items, chosen at random, to val.
void carve_val(std::vector<QAItem*>& train_side, double fraction, Rng& rng) {
  shuffle(train_side, rng);
  const auto n_val = rounded(fraction * static_cast<double>(train_side.size()));
  for (std::size_t i = 0; i < train_side.size(); ++i)
    train_side[i]->split = i < n_val ? Split::val : Split::train;
}

void split_iid(Dataset& d, const SplitOptions& o, Rng& rng) {
  std::vector<QAItem*> order;
  for (auto& it : d.items) order.push_back(&it);
  shuffle(order, rng);
  const double n = static_cast<double>(order.size());
  const auto n_test = rounded(o.test_fraction * n);
  const auto n_val = rounded(o.val_fraction * n);
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i]->split = i < n_test ? Split::test : i < n_test + n_val ? Split::val : Split::train;
  }
}

std::size_t split_compositional(Dataset& d, const SplitOptions& o, Rng& rng) {
  const std::set<ShapeColor> held(o.held_out.begin(), o.held_out.end());
  std::vector<QAItem> kept;
  std::size_t dropped = 0;
  for (auto& it : d.items) {
    const auto refs = referenced_pairs(it.question, d.scene(it.scene_id));
    const auto n_held = static_cast<std::size_t>(
        std::count_if(refs.begin(), refs.end(), [&](const ShapeColor& p) { return held.count(p) > 0; }));
    if (n_held > 0 && n_held < refs.size()) {
      ++dropped;
      continue;
    }
    it.split = n_held > 0 ? Split::test : Split::train;
    kept.push_back(std::move(it));
  }
  d.items = std::move(kept);
  std::vector<QAItem*> train_side;
  for (auto& it : d.items)
    if (it.split == Split::train) train_side.push_back(&it);
  carve_val(train_side, o.val_fraction / (1.0 - o.test_fraction), rng);
  return dropped;
}

std::map<Family, double> split_changing_priors(Dataset& d, const SplitOptions& o, Rng& rng) {
  std::map<Family, std::map<std::string, std::size_t>> counts;
  for (const auto& it : d.items) ++counts[it.family][it.answer];

  // Answers of each family ranked by frequency, dealt alternately into the
  // favoured (test-heavy) and disfavoured halves.
  std::map<Family, std::set<std::string>> favoured;
  for (const auto& [family, by_answer] : counts) {
    std::vector<std::pair<std::string, std::size_t>> ranked(by_answer.begin(), by_answer.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < ranked.size(); i += 2) favoured[family].insert(ranked[i].first);
  }

  std::vector<QAItem*> train_side;
  for (auto& it : d.items) {
    const double p = favoured[it.family].count(it.answer) ? o.prior_skew : 1.0 - o.prior_skew;
    if (uniform01(rng) < p) {
      it.split = Split::test;
    } else {
      train_side.push_back(&it);
    }
  }
  carve_val(train_side, o.val_fraction / (1.0 - o.test_fraction), rng);

  std::map<Family, double> tv;
  for (const auto& [family, unused] : counts) {
    std::vector<const QAItem*> train, test;
    for (const auto& it : d.items) {
      if (it.family != family) continue;
      if (it.split == Split::train) train.push_back(&it);
      if (it.split == Split::test) test.push_back(&it);
    }
    if (train.empty() || test.empty()) {
      throw DataError("changing_priors: family " + std::string(to_string(family)) +
                      " has an empty train or test side; achieved TV 0");
    }
    tv[family] = answer_tv(train, test);
  }
  for (const auto& [family, distance] : tv) {
    if (distance < o.min_tv) {
      std::ostringstream msg;
      msg << "changing_priors: family " << to_string(family) << " reached TV " << distance
          << " < required " << o.min_tv;
      throw DataError(msg.str());
    }
  }
  return tv;
}

}  // namespace

Dataset generate_corpus(const CorpusConfig& config) {
  if (config.families.empty()) throw std::invalid_argument("generate_corpus: no families");
  Dataset d;
  d.feature_seed = derive_seed(config.seed, {kFeatureStream});
  const auto scene_seed = derive_seed(config.seed, {kSceneStream});
  const auto question_seed = derive_seed(config.seed, {kQuestionSeedStream});
  std::uint64_t next_id = 0;
  for (std::size_t s = 0; s < config.num_scenes; ++s) {
    d.scenes.push_back(generate_scene(scene_seed, s, config.max_objects));
    for (auto& item : generate_questions(d.scenes.back(), config.families,
                                         config.questions_per_family, question_seed)) {
      item.id = next_id++;
      d.items.push_back(std::move(item));
    }
  }
  return d;
}

Dataset truncate_items(const Dataset& dataset, std::size_t max_items) {
  Dataset out;
  out.feature_seed = dataset.feature_seed;
  std::size_t i = 0;
  for (const auto& scene : dataset.scenes) {
    std::size_t end = i;
    while (end < dataset.items.size() && dataset.items[end].scene_id == scene.id) ++end;
    if (end - i + out.items.size() > max_items) break;
    out.scenes.push_back(scene);
    out.items.insert(out.items.end(), dataset.items.begin() + static_cast<std::ptrdiff_t>(i),
                     dataset.items.begin() + static_cast<std::ptrdiff_t>(end));
    i = end;
  }
  return out;
}

// ---- vocabulary -------------------------------------------------------------

AnswerVocab::AnswerVocab(std::vector<std::string> answers) : answers_(std::move(answers)) {
  for (std::size_t i = 0; i < answers_.size(); ++i) {
    if (!index_.emplace(answers_[i], i).second) {
      throw std::invalid_argument("answer vocabulary: duplicate answer '" + answers_[i] + "'");
    }
  }
}

std::optional<std::size_t> AnswerVocab::find(const std::string& answer) const {
  auto it = index_.find(answer);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

AnswerVocab build_answer_vocab(std::span<const QAItem> items, VocabRule rule) {
  if (items.empty()) throw DataError("answer vocabulary: no items");
  std::map<std::string, std::size_t> counts;
  for (const auto& it : items) {
    const bool counted = it.split == Split::train || it.split == Split::unassigned ||
                         (rule.kind == VocabRule::Kind::min_count && it.split == Split::val);
    if (counted) ++counts[it.answer];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> kept;
  for (const auto& [answer, n] : ranked) {
    if (rule.kind == VocabRule::Kind::min_count ? n >= rule.value : kept.size() < rule.value) {
      kept.push_back(answer);
    }
  }
  if (kept.empty()) throw DataError("answer vocabulary: no answer satisfies the rule");
  return AnswerVocab(std::move(kept));
}

// ---- splits -----------------------------------------------------------------

std::string_view to_string(SplitRegime r) {
  switch (r) {
    case SplitRegime::iid: return "iid";
    case SplitRegime::compositional: return "compositional";
    case SplitRegime::changing_priors: return "changing_priors";
  }
  return "unknown";
}

SplitRegime parse_split_regime(std::string_view name) {
  for (auto r : {SplitRegime::iid, SplitRegime::compositional, SplitRegime::changing_priors})
    if (to_string(r) == name) return r;
  throw std::invalid_argument("unknown split regime '" + std::string(name) +
                              "' (expected iid, compositional or changing_priors)");
}

std::vector<ShapeColor> default_held_out_pairs() {
  using enum Color;
  return {{ShapeKind::cube, red},       {ShapeKind::cube, green},     {ShapeKind::cube, purple},
          {ShapeKind::cube, cyan},      {ShapeKind::cylinder, gray},  {ShapeKind::cylinder, blue},
          {ShapeKind::cylinder, brown}, {ShapeKind::cylinder, yellow}};
}

double answer_tv(std::span<const QAItem* const> a, std::span<const QAItem* const> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("answer_tv: empty item set");
  std::map<std::string, double> diff;
  for (const auto* it : a) diff[it->answer] += 1.0 / static_cast<double>(a.size());
  for (const auto* it : b) diff[it->answer] -= 1.0 / static_cast<double>(b.size());
  double tv = 0;
  for (const auto& [answer, d] : diff) tv += std::abs(d);
  return 0.5 * tv;
}

SplitReport make_splits(Dataset& dataset, const SplitOptions& options) {
  std::set<Family> families;
  for (const auto& it : dataset.items) families.insert(it.family);
  if (families.size() < 2) {
    throw DataError("make_splits: items cover " + std::to_string(families.size()) +
                    " question families, need at least 2");
  }
  if (!(options.val_fraction >= 0 && options.test_fraction > 0 &&
        options.val_fraction + options.test_fraction < 1)) {
    throw std::invalid_argument("make_splits: fractions must satisfy 0 <= val, 0 < test, val + test < 1");
  }
  Rng rng(derive_seed(options.seed, {kSplitStream, static_cast<std::uint64_t>(options.regime)}));
  SplitReport report;
  report.regime = options.regime;
  switch (options.regime) {
    case SplitRegime::iid: split_iid(dataset, options, rng); break;
    case SplitRegime::compositional:
      report.dropped = split_compositional(dataset, options, rng);
      break;
    case SplitRegime::changing_priors:
      report.tv = split_changing_priors(dataset, options, rng);
      break;
  }
  for (const auto& it : dataset.items) {
    switch (it.split) {
      case Split::train: ++report.train; break;
      case Split::val: ++report.val; break;
      case Split::test: ++report.test; break;
      case Split::unassigned: break;
    }
  }
  return report;
}

}  // namespace ramen::data
