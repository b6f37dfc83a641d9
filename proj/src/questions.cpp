// SPDX-License-Identifier: Apache-2.0

#include "ramen/questions.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "ramen/random.hpp"

namespace ramen::data {
namespace {

constexpr std::uint64_t kQuestionStream = 0x9e57ULL;
constexpr std::size_t kMaxTries = 200;

constexpr std::array<std::string_view, 3> kAttributeNames = {"color", "shape", "size"};

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

void append_filter(std::ostringstream& os, const Filter& f, bool plural) {
  if (f.size) os << to_string(*f.size) << ' ';
  if (f.color) os << to_string(*f.color) << ' ';
  if (f.shape) {
    os << (plural ? kShapePlurals[static_cast<std::size_t>(*f.shape)] : to_string(*f.shape));
  } else {
    os << (plural ? "objects" : "object");
  }
}

template <typename Names>
std::optional<std::size_t> index_of(const Names& names, std::string_view w) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == w) return i;
  return std::nullopt;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text), words_(split_words(text)) {}

  void expect(std::string_view word) {
    if (pos_ >= words_.size() || words_[pos_] != word) fail("expected '" + std::string(word) + "'");
    ++pos_;
  }

  bool accept(std::string_view word) {
    if (pos_ < words_.size() && words_[pos_] == word) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string_view peek() const {
    return pos_ < words_.size() ? std::string_view(words_[pos_]) : std::string_view();
  }

  Filter filter(bool plural) {
    Filter f;
    if (auto s = index_of(kSizeNames, peek())) {
      f.size = static_cast<Size>(*s);
      ++pos_;
    }
    if (auto c = index_of(kColorNames, peek())) {
      f.color = static_cast<Color>(*c);
      ++pos_;
    }
    const auto& nouns = plural ? kShapePlurals : kShapeNames;
    if (auto s = index_of(nouns, peek())) {
      f.shape = static_cast<ShapeKind>(*s);
      ++pos_;
    } else if (!accept(plural ? "objects" : "object")) {
      fail(plural ? "expected a plural noun" : "expected a noun");
    }
    return f;
  }

  Attribute attribute() {
    auto a = index_of(kAttributeNames, peek());
    if (!a) fail("expected an attribute name");
    ++pos_;
    return static_cast<Attribute>(*a);
  }

  void finish() {
    expect("?");
    if (pos_ != words_.size()) fail("trailing words");
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw std::invalid_argument("cannot parse question '" + std::string(text_) + "' at word " +
                                std::to_string(pos_) + ": " + why);
  }

 private:
  std::string_view text_;
  std::vector<std::string> words_;
  std::size_t pos_ = 0;
};

std::size_t count_matches(const Filter& f, const Scene& scene) {
  return static_cast<std::size_t>(
      std::count_if(scene.objects.begin(), scene.objects.end(),
                    [&](const ObjectSpec& o) { return f.matches(o); }));
}

const ObjectSpec& unique_match(const Filter& f, const Scene& scene) {
  const ObjectSpec* found = nullptr;
  for (const auto& o : scene.objects) {
    if (!f.matches(o)) continue;
    if (found) throw std::invalid_argument("reference is ambiguous");
    found = &o;
  }
  if (!found) throw std::invalid_argument("reference matches no object");
  return *found;
}

std::string attribute_value(const ObjectSpec& o, Attribute a) {
  switch (a) {
    case Attribute::color: return std::string(to_string(o.color));
    case Attribute::shape: return std::string(to_string(o.shape));
    case Attribute::size: return std::string(to_string(o.size));
  }
  return {};
}

bool constrains(const Filter& f, Attribute a) {
  switch (a) {
    case Attribute::color: return f.color.has_value();
    case Attribute::shape: return f.shape.has_value();
    case Attribute::size: return f.size.has_value();
  }
  return false;
}

// ---- generation helpers ----------------------------------------------------

bool coin(Rng& rng) { return uniform_index(rng, 2) == 1; }

const ObjectSpec& pick(Rng& rng, const Scene& scene) {
  return scene.objects[uniform_index(rng, scene.objects.size())];
}

// Nonempty random subset of the object's attributes, skipping `skip`.
Filter filter_from(Rng& rng, const ObjectSpec& o, std::optional<Attribute> skip = std::nullopt) {
  for (;;) {
    Filter f;
    if (skip != Attribute::size && coin(rng)) f.size = o.size;
    if (skip != Attribute::color && coin(rng)) f.color = o.color;
    if (skip != Attribute::shape && coin(rng)) f.shape = o.shape;
    if (f.size || f.color || f.shape) return f;
  }
}

Filter random_filter(Rng& rng) {
  for (;;) {
    Filter f;
    if (coin(rng)) f.size = static_cast<Size>(uniform_index(rng, kNumSizes));
    if (coin(rng)) f.color = static_cast<Color>(uniform_index(rng, kNumColors));
    if (coin(rng)) f.shape = static_cast<ShapeKind>(uniform_index(rng, kNumShapes));
    if (f.size || f.color || f.shape) return f;
  }
}

// First attribute subset (in random order) that picks out only `o`.
std::optional<Filter> unique_reference(Rng& rng, const Scene& scene, const ObjectSpec& o,
                                       Attribute hidden) {
  std::vector<Filter> candidates;
  for (int mask = 0; mask < 8; ++mask) {
    Filter f;
    if ((mask & 1) && hidden != Attribute::size) f.size = o.size;
    if ((mask & 2) && hidden != Attribute::color) f.color = o.color;
    if ((mask & 4) && hidden != Attribute::shape) f.shape = o.shape;
    if (std::find(candidates.begin(), candidates.end(), f) == candidates.end()) {
      candidates.push_back(f);
    }
  }
  shuffle(candidates, rng);
  for (const auto& f : candidates)
    if (count_matches(f, scene) == 1) return f;
  return std::nullopt;
}

std::optional<Program> sample_program(Rng& rng, const Scene& scene, Family family) {
  Program p;
  p.family = family;
  switch (family) {
    case Family::exist: {
      const bool want = coin(rng);
      for (std::size_t t = 0; t < kMaxTries; ++t) {
        p.first = coin(rng) ? filter_from(rng, pick(rng, scene)) : random_filter(rng);
        if ((count_matches(p.first, scene) > 0) == want) return p;
      }
      return std::nullopt;
    }
    case Family::count: {
      const double u = uniform01(rng);
      if (u < 0.2) {
        for (std::size_t t = 0; t < kMaxTries; ++t) {
          p.first = random_filter(rng);
          if (count_matches(p.first, scene) == 0) return p;
        }
        return std::nullopt;
      }
      p.first = u < 0.3 ? Filter{} : filter_from(rng, pick(rng, scene));
      return p;
    }
    case Family::query_attribute: {
      for (std::size_t t = 0; t < kMaxTries; ++t) {
        p.attribute = static_cast<Attribute>(uniform_index(rng, 3));
        if (auto f = unique_reference(rng, scene, pick(rng, scene), p.attribute)) {
          p.first = *f;
          return p;
        }
      }
      return std::nullopt;
    }
    case Family::compare_attribute: {
      if (scene.objects.size() < 2) return std::nullopt;
      const bool want = coin(rng);
      for (std::size_t t = 0; t < kMaxTries; ++t) {
        const auto i = uniform_index(rng, scene.objects.size());
        auto j = uniform_index(rng, scene.objects.size() - 1);
        if (j >= i) ++j;
        p.attribute = static_cast<Attribute>(uniform_index(rng, 3));
        const auto& a = scene.objects[i];
        const auto& b = scene.objects[j];
        if ((attribute_value(a, p.attribute) == attribute_value(b, p.attribute)) != want) continue;
        auto fa = unique_reference(rng, scene, a, p.attribute);
        auto fb = unique_reference(rng, scene, b, p.attribute);
        if (!fa || !fb) continue;
        p.first = *fa;
        p.second = *fb;
        return p;
      }
      return std::nullopt;
    }
    case Family::integer_comparison: {
      const bool want = coin(rng);
      p.comparison = static_cast<Comparison>(uniform_index(rng, 3));
      for (std::size_t t = 0; t < kMaxTries; ++t) {
        p.first = coin(rng) ? filter_from(rng, pick(rng, scene)) : random_filter(rng);
        p.second = coin(rng) ? filter_from(rng, pick(rng, scene)) : random_filter(rng);
        if (p.first == p.second) continue;
        if ((evaluate(p, scene) == "yes") == want) return p;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Family f) {
  switch (f) {
    case Family::exist: return "exist";
    case Family::count: return "count";
    case Family::query_attribute: return "query_attribute";
    case Family::compare_attribute: return "compare_attribute";
    case Family::integer_comparison: return "integer_comparison";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (auto f : kAllFamilies)
    if (to_string(f) == name) return f;
  throw std::invalid_argument("unknown question family '" + std::string(name) + "'");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::unassigned: return "unassigned";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  for (auto s : {Split::unassigned, Split::train, Split::val, Split::test})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

bool Filter::matches(const ObjectSpec& o) const {
  return (!size || *size == o.size) && (!color || *color == o.color) &&
         (!shape || *shape == o.shape);
}

std::string render_question(const Program& p) {
  std::ostringstream os;
  const auto attr = kAttributeNames[static_cast<std::size_t>(p.attribute)];
  switch (p.family) {
    case Family::exist:
      os << "is there a ";
      append_filter(os, p.first, false);
      os << " ?";
      break;
    case Family::count:
      os << "how many ";
      append_filter(os, p.first, true);
      os << " are there ?";
      break;
    case Family::query_attribute:
      os << "what " << attr << " is the ";
      append_filter(os, p.first, false);
      os << " ?";
      break;
    case Family::compare_attribute:
      os << "does the ";
      append_filter(os, p.first, false);
      os << " have the same " << attr << " as the ";
      append_filter(os, p.second, false);
      os << " ?";
      break;
    case Family::integer_comparison:
      if (p.comparison == Comparison::equal) {
        os << "are there the same number of ";
        append_filter(os, p.first, true);
        os << " and ";
      } else {
        os << "are there " << (p.comparison == Comparison::more ? "more " : "fewer ");
        append_filter(os, p.first, true);
        os << " than ";
      }
      append_filter(os, p.second, true);
      os << " ?";
      break;
  }
  return os.str();
}

Program parse_question(std::string_view question) {
  Parser in(question);
  Program p;
  if (in.accept("is")) {
    p.family = Family::exist;
    in.expect("there");
    in.expect("a");
    p.first = in.filter(false);
  } else if (in.accept("how")) {
    p.family = Family::count;
    in.expect("many");
    p.first = in.filter(true);
    in.expect("are");
    in.expect("there");
  } else if (in.accept("what")) {
    p.family = Family::query_attribute;
    p.attribute = in.attribute();
    in.expect("is");
    in.expect("the");
    p.first = in.filter(false);
    if (constrains(p.first, p.attribute)) in.fail("query names the attribute it asks for");
  } else if (in.accept("does")) {
    p.family = Family::compare_attribute;
    in.expect("the");
    p.first = in.filter(false);
    in.expect("have");
    in.expect("the");
    in.expect("same");
    p.attribute = in.attribute();
    in.expect("as");
    in.expect("the");
    p.second = in.filter(false);
  } else if (in.accept("are")) {
    p.family = Family::integer_comparison;
    in.expect("there");
    if (in.accept("the")) {
      p.comparison = Comparison::equal;
      in.expect("same");
      in.expect("number");
      in.expect("of");
      p.first = in.filter(true);
      in.expect("and");
    } else {
      if (in.accept("more")) {
        p.comparison = Comparison::more;
      } else if (in.accept("fewer")) {
        p.comparison = Comparison::fewer;
      } else {
        in.fail("expected 'more', 'fewer' or 'the same number of'");
      }
      p.first = in.filter(true);
      in.expect("than");
    }
    p.second = in.filter(true);
  } else {
    in.fail("unknown question template");
  }
  in.finish();
  return p;
}

std::string evaluate(const Program& p, const Scene& scene) {
  switch (p.family) {
    case Family::exist: return count_matches(p.first, scene) > 0 ? "yes" : "no";
    case Family::count: return std::to_string(count_matches(p.first, scene));
    case Family::query_attribute: return attribute_value(unique_match(p.first, scene), p.attribute);
    case Family::compare_attribute: {
      const auto& a = unique_match(p.first, scene);
      const auto& b = unique_match(p.second, scene);
      if (&a == &b) throw std::invalid_argument("comparison refers to the same object twice");
      return attribute_value(a, p.attribute) == attribute_value(b, p.attribute) ? "yes" : "no";
    }
    case Family::integer_comparison: {
      const auto a = count_matches(p.first, scene);
      const auto b = count_matches(p.second, scene);
      bool yes = false;
      switch (p.comparison) {
        case Comparison::more: yes = a > b; break;
        case Comparison::fewer: yes = a < b; break;
        case Comparison::equal: yes = a == b; break;
      }
      return yes ? "yes" : "no";
    }
  }
  return {};
}

std::string answer_oracle(std::string_view question, const Scene& scene) {
  return evaluate(parse_question(question), scene);
}

std::set<std::pair<ShapeKind, Color>> referenced_pairs(std::string_view question,
                                                       const Scene& scene) {
  const Program p = parse_question(question);
  std::set<std::pair<ShapeKind, Color>> pairs;
  auto add = [&](const Filter& f) {
    for (const auto& o : scene.objects)
      if (f.matches(o)) pairs.emplace(o.shape, o.color);
    if (f.shape && f.color) pairs.emplace(*f.shape, *f.color);
  };
  add(p.first);
  if (p.family == Family::compare_attribute || p.family == Family::integer_comparison) {
    add(p.second);
  }
  return pairs;
}

const std::vector<std::string>& question_vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v = {"<pad>", "<unk>", "?",     "is",     "there", "a",    "how",
                                  "many",  "are",   "what",  "the",    "does",  "have", "same",
                                  "as",    "more",  "fewer", "than",   "number", "of",  "and",
                                  "color", "shape", "size",  "object", "objects"};
    for (auto s : kSizeNames) v.emplace_back(s);
    for (auto c : kColorNames) v.emplace_back(c);
    for (auto s : kShapeNames) v.emplace_back(s);
    for (auto s : kShapePlurals) v.emplace_back(s);
    return v;
  }();
  return vocab;
}

std::vector<std::size_t> tokenize(std::string_view question) {
  static const std::unordered_map<std::string, std::size_t> index = [] {
    std::unordered_map<std::string, std::size_t> m;
    const auto& v = question_vocabulary();
    for (std::size_t i = 0; i < v.size(); ++i) m.emplace(v[i], i);
    return m;
  }();
  std::vector<std::size_t> ids;
  for (const auto& w : split_words(question)) {
    auto it = index.find(w);
    ids.push_back(it == index.end() ? kUnknownId : it->second);
  }
  return ids;
}

std::vector<std::string> all_answers(std::size_t max_objects) {
  std::vector<std::string> out = {"yes", "no"};
  for (std::size_t n = 0; n <= max_objects; ++n) out.push_back(std::to_string(n));
  for (auto c : kColorNames) out.emplace_back(c);
  for (auto s : kShapeNames) out.emplace_back(s);
  for (auto s : kSizeNames) out.emplace_back(s);
  return out;
}

std::vector<QAItem> generate_questions(const Scene& scene, std::span<const Family> families,
                                       std::size_t per_family, std::uint64_t seed) {
  if (families.empty()) throw std::invalid_argument("generate_questions: no families requested");
  std::vector<QAItem> items;
  if (scene.objects.empty()) return items;
  Rng rng(derive_seed(seed, {kQuestionStream, scene.id}));
  std::unordered_set<std::string> seen;
  for (auto family : families) {
    std::size_t made = 0;
    for (std::size_t attempt = 0; made < per_family && attempt < 4 * per_family + 4; ++attempt) {
      auto program = sample_program(rng, scene, family);
      if (!program) continue;
      std::string text = render_question(*program);
      if (!seen.insert(text).second) continue;
      QAItem item;
      item.scene_id = scene.id;
      item.family = family;
      item.answer = evaluate(*program, scene);
      item.tokens = tokenize(text);
      item.question = std::move(text);
      items.push_back(std::move(item));
      ++made;
    }
  }
  return items;
}

}  // namespace ramen::data
