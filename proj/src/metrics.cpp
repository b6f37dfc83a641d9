// SPDX-License-Identifier: Apache-2.0

#include "ramen/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

namespace ramen::metrics {
namespace {

constexpr std::size_t kConsensusAnswers = 10;

void require_records(std::span<const PredictionRecord> records, const char* what) {
  if (records.empty()) throw std::invalid_argument(std::string(what) + ": no records");
  for (const auto& r : records) {
    if (r.gold.empty()) {
      throw std::invalid_argument(std::string(what) + ": record " + std::to_string(r.question_id) +
                                  " has no gold answer");
    }
  }
}

struct Tally {
  double score = 0;
  std::size_t count = 0;
  double mean() const { return score / static_cast<double>(count); }
};

struct FamilyTally {
  Tally all;
  std::map<std::string, Tally> by_answer;
};

std::map<std::string, FamilyTally> tally(std::span<const PredictionRecord> records) {
  std::map<std::string, FamilyTally> families;
  for (const auto& r : records) {
    const double s = record_score(r);
    auto& f = families[r.family];
    f.all.score += s;
    ++f.all.count;
    auto& a = f.by_answer[canonical_gold(r)];
    a.score += s;
    ++a.count;
  }
  return families;
}

double family_nmpt(const FamilyTally& f) {
  double sum = 0;
  for (const auto& [answer, t] : f.by_answer) sum += t.mean();
  return sum / static_cast<double>(f.by_answer.size());
}

}  // namespace

std::string normalize_answer(std::string_view answer) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!answer.empty() && is_space(answer.front())) answer.remove_prefix(1);
  while (!answer.empty() && is_space(answer.back())) answer.remove_suffix(1);
  std::string out(answer);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double record_score(const PredictionRecord& r) {
  const auto pred = normalize_answer(r.predicted);
  if (r.gold.size() == 1) return pred == normalize_answer(r.gold[0]) ? 1.0 : 0.0;
  if (r.gold.size() != kConsensusAnswers) {
    throw std::invalid_argument("record " + std::to_string(r.question_id) + " has " +
                                std::to_string(r.gold.size()) + " gold answers; expected 1 or 10");
  }
  const auto matches = std::count_if(r.gold.begin(), r.gold.end(), [&](const std::string& g) {
    return normalize_answer(g) == pred;
  });
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

std::string canonical_gold(const PredictionRecord& r) {
  if (r.gold.empty()) throw std::invalid_argument("record has no gold answer");
  std::map<std::string, std::size_t> counts;
  for (const auto& g : r.gold) ++counts[normalize_answer(g)];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

double simple_accuracy(std::span<const PredictionRecord> records) {
  require_records(records, "simple_accuracy");
  double hits = 0;
  for (const auto& r : records) {
    if (r.gold.size() != 1) {
      throw std::invalid_argument("simple_accuracy: record " + std::to_string(r.question_id) +
                                  " has more than one gold answer");
    }
    hits += record_score(r);
  }
  return hits / static_cast<double>(records.size());
}

double vqa_10choose3(std::span<const PredictionRecord> records) {
  require_records(records, "vqa_10choose3");
  double total = 0;
  for (const auto& r : records) {
    if (r.gold.size() != kConsensusAnswers) {
      throw std::invalid_argument("vqa_10choose3: record " + std::to_string(r.question_id) +
                                  " has " + std::to_string(r.gold.size()) +
                                  " gold answers; expected 10");
    }
    total += record_score(r);
  }
  return total / static_cast<double>(records.size());
}

double mean_per_type(std::span<const PredictionRecord> records) {
  require_records(records, "mean_per_type");
  const auto families = tally(records);
  double sum = 0;
  for (const auto& [name, f] : families) sum += f.all.mean();
  return sum / static_cast<double>(families.size());
}

double normalized_mean_per_type(std::span<const PredictionRecord> records) {
  require_records(records, "normalized_mean_per_type");
  const auto families = tally(records);
  double sum = 0;
  for (const auto& [name, f] : families) sum += family_nmpt(f);
  return sum / static_cast<double>(families.size());
}

double harmonic_mean_per_type(std::span<const PredictionRecord> records) {
  require_records(records, "harmonic_mean_per_type");
  const auto families = tally(records);
  double inv = 0;
  for (const auto& [name, f] : families) {
    const double acc = f.all.mean();
    if (acc == 0) return 0;
    inv += 1.0 / acc;
  }
  return static_cast<double>(families.size()) / inv;
}

MetricsReport evaluate_records(std::span<const PredictionRecord> records,
                               std::span<const std::string> expected_families,
                               bool with_harmonic) {
  require_records(records, "evaluate_records");
  MetricsReport report;
  const auto families = tally(records);
  double total = 0, mpt = 0, nmpt = 0;
  for (const auto& [name, f] : families) {
    auto& fr = report.per_family[name];
    fr.simple = f.all.mean();
    fr.count = f.all.count;
    for (const auto& [answer, t] : f.by_answer) fr.per_answer[answer] = t.mean();
    total += f.all.score;
    mpt += fr.simple;
    nmpt += family_nmpt(f);
  }
  const auto n_fam = static_cast<double>(families.size());
  report.simple = total / static_cast<double>(records.size());
  report.mpt = mpt / n_fam;
  report.nmpt = nmpt / n_fam;
  const bool consensus = std::all_of(records.begin(), records.end(), [](const PredictionRecord& r) {
    return r.gold.size() == kConsensusAnswers;
  });
  if (consensus) report.vqa10c3 = report.simple;
  if (with_harmonic) report.harmonic_mpt = harmonic_mean_per_type(records);
  for (const auto& name : expected_families) {
    if (!families.count(name)) {
      report.warnings.push_back("family '" + name + "' has no records; excluded from MPT/N-MPT");
    }
  }
  return report;
}

std::string report_json(const MetricsReport& report) {
  nlohmann::ordered_json overall{{"simple", report.simple}};
  if (report.vqa10c3) overall["vqa10c3"] = *report.vqa10c3;
  overall["mpt"] = report.mpt;
  overall["nmpt"] = report.nmpt;
  if (report.harmonic_mpt) overall["harmonic_mpt"] = *report.harmonic_mpt;
  nlohmann::ordered_json per_family = nlohmann::ordered_json::object();
  for (const auto& [name, f] : report.per_family) {
    nlohmann::ordered_json answers = nlohmann::ordered_json::object();
    for (const auto& [a, acc] : f.per_answer) answers[a] = acc;
    per_family[name] = {{"simple", f.simple}, {"count", f.count}, {"per_answer", answers}};
  }
  nlohmann::ordered_json j{{"overall", overall}, {"per_family", per_family}};
  if (!report.warnings.empty()) j["warnings"] = report.warnings;
  return j.dump(2);
}

}  // namespace ramen::metrics
