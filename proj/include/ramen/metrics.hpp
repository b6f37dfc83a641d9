// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: simple accuracy, 10-choose-3 consensus accuracy,
// mean-per-type (MPT) and normalized mean-per-type (N-MPT).

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ramen::metrics {

struct PredictionRecord {
  std::uint64_t question_id = 0;
  std::string family;
  std::string predicted;
  /// One answer, or ten annotator answers.
  std::vector<std::string> gold;
};

/// Lowercased, surrounding whitespace removed.
std::string normalize_answer(std::string_view answer);

/// Exact-match score for a single gold answer, consensus score for ten.
double record_score(const PredictionRecord& r);

/// Gold answer a record is grouped under for N-MPT: the single gold answer,
/// or the most frequent of the ten (ties to the lexicographically smallest).
std::string canonical_gold(const PredictionRecord& r);

double simple_accuracy(std::span<const PredictionRecord> records);
double vqa_10choose3(std::span<const PredictionRecord> records);
double mean_per_type(std::span<const PredictionRecord> records);
double normalized_mean_per_type(std::span<const PredictionRecord> records);
/// Harmonic mean of the per-family accuracies (0 if any family scores 0).
double harmonic_mean_per_type(std::span<const PredictionRecord> records);

struct FamilyReport {
  double simple = 0;
  std::size_t count = 0;
  std::map<std::string, double> per_answer;
};

struct MetricsReport {
  double simple = 0;
  std::optional<double> vqa10c3;
  double mpt = 0;
  double nmpt = 0;
  std::optional<double> harmonic_mpt;
  std::map<std::string, FamilyReport> per_family;
  /// Expected families that had no records and were left out of MPT/N-MPT.
  std::vector<std::string> warnings;
};

/// Full report. `expected_families` only feeds the warnings list.
MetricsReport evaluate_records(std::span<const PredictionRecord> records,
                               std::span<const std::string> expected_families = {},
                               bool with_harmonic = false);

/// {overall: {simple, vqa10c3?, mpt, nmpt, harmonic_mpt?}, per_family: {...}}
std::string report_json(const MetricsReport& report);

}  // namespace ramen::metrics
