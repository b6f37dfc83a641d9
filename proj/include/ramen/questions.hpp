// SPDX-License-Identifier: Apache-2.0
//
// Template questions in five families, the closed token vocabulary, and the
// answer oracle that parses a question back into a program and evaluates it
// on a scene.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ramen/scene.hpp"

namespace ramen::data {

enum class Family : std::uint8_t {
  exist,
  count,
  query_attribute,
  compare_attribute,
  integer_comparison
};

inline constexpr Family kAllFamilies[] = {Family::exist, Family::count, Family::query_attribute,
                                          Family::compare_attribute, Family::integer_comparison};

std::string_view to_string(Family f);
Family parse_family(std::string_view name);

enum class Split : std::uint8_t { unassigned, train, val, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct QAItem {
  std::uint64_t id = 0;
  std::uint64_t scene_id = 0;
  Family family = Family::exist;
  std::string question;
  std::vector<std::size_t> tokens;
  std::string answer;
  Split split = Split::unassigned;

  bool operator==(const QAItem&) const = default;
};

/// Object filter; unset attributes match anything.
struct Filter {
  std::optional<Size> size;
  std::optional<Color> color;
  std::optional<ShapeKind> shape;

  bool matches(const ObjectSpec& o) const;
  bool operator==(const Filter&) const = default;
};

enum class Attribute : std::uint8_t { color, shape, size };
enum class Comparison : std::uint8_t { more, fewer, equal };

/// A parsed question. `second` is used by the two-operand families.
struct Program {
  Family family = Family::exist;
  Filter first;
  Filter second;
  Attribute attribute = Attribute::color;
  Comparison comparison = Comparison::more;

  bool operator==(const Program&) const = default;
};

std::string render_question(const Program& p);

/// Parses a rendered question; throws std::invalid_argument if the text is
/// not produced by one of the templates.
Program parse_question(std::string_view question);

/// Evaluates a program; throws std::invalid_argument when a definite
/// reference ("the small red cube") does not pick out exactly one object.
std::string evaluate(const Program& p, const Scene& scene);

/// parse_question followed by evaluate.
std::string answer_oracle(std::string_view question, const Scene& scene);

/// (shape, color) pairs of every object selected by the question's filters,
/// plus the pair a filter names outright when it fixes both attributes.
std::set<std::pair<ShapeKind, Color>> referenced_pairs(std::string_view question,
                                                       const Scene& scene);

// ---- tokens ---------------------------------------------------------------

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnknownId = 1;

/// Closed template vocabulary; index 0 is the pad token, 1 the unknown token.
const std::vector<std::string>& question_vocabulary();

/// Whitespace tokenization into vocabulary ids (unknown words -> kUnknownId).
std::vector<std::size_t> tokenize(std::string_view question);

/// Every answer any family can produce for scenes of up to max_objects.
std::vector<std::string> all_answers(std::size_t max_objects = kMaxObjects);

/// `per_family` questions of each listed family about `scene`, answers
/// computed from the scene. Yes/no families are balanced by sampling the
/// target answer first. Templates that cannot be satisfied on this scene
/// are skipped, so fewer items may come back. Item ids are left at 0.
std::vector<QAItem> generate_questions(const Scene& scene, std::span<const Family> families,
                                       std::size_t per_family, std::uint64_t seed);

}  // namespace ramen::data
