// SPDX-License-Identifier: Apache-2.0

#include "ramen/run_config.hpp"

#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "ramen/random.hpp"

namespace ramen::cli {
namespace {

using detail::Json;
using detail::StrictObject;

constexpr std::uint64_t kModelStream = 0x30de1ULL;
constexpr std::uint64_t kTrainerStream = 0x7a1aULL;

template <typename Enum, typename Parse>
void read_enum(StrictObject& o, const char* key, Enum& out, Parse parse) {
  if (!o.has(key)) return;
  std::string name;
  o.optional(key, name);
  try {
    out = parse(name);
  } catch (const std::invalid_argument& e) {
    StrictObject::fail(o.key_path(key), e.what());
  }
}

Json data_json(const DataSettings& d) {
  Json families = Json::array();
  for (auto f : d.corpus.families) families.push_back(data::to_string(f));
  Json held = Json::array();
  for (const auto& [s, c] : d.split.held_out) held.push_back({data::to_string(s), data::to_string(c)});
  Json vocab = d.vocab.kind == data::VocabRule::Kind::min_count
                   ? Json{{"min_count", d.vocab.value}}
                   : Json{{"top_k", d.vocab.value}};
  return Json{{"num_scenes", d.corpus.num_scenes},
              {"questions_per_family", d.corpus.questions_per_family},
              {"max_objects", d.corpus.max_objects},
              {"families", families},
              {"visual_dim", d.features.visual_dim},
              {"spatial_grid", d.features.spatial_grid},
              {"num_regions", d.features.num_regions},
              {"noise_sigma", d.features.noise_sigma},
              {"vocab", vocab},
              {"val_fraction", d.split.val_fraction},
              {"test_fraction", d.split.test_fraction},
              {"held_out", held},
              {"prior_skew", d.split.prior_skew},
              {"min_tv", d.split.min_tv}};
}

void read_data(const Json& j, DataSettings& d) {
  StrictObject o(j, "data");
  o.optional("num_scenes", d.corpus.num_scenes);
  o.optional("questions_per_family", d.corpus.questions_per_family);
  o.optional("max_objects", d.corpus.max_objects);
  if (o.has("families")) {
    std::vector<std::string> names;
    o.optional("families", names);
    d.corpus.families.clear();
    for (const auto& n : names) {
      try {
        d.corpus.families.push_back(data::parse_family(n));
      } catch (const std::invalid_argument& e) {
        StrictObject::fail("data.families", e.what());
      }
    }
  }
  o.optional("visual_dim", d.features.visual_dim);
  o.optional("spatial_grid", d.features.spatial_grid);
  o.optional("num_regions", d.features.num_regions);
  o.optional("noise_sigma", d.features.noise_sigma);
  if (const Json* v = o.child("vocab")) {
    StrictObject vo(*v, "data.vocab");
    const bool by_count = vo.has("min_count"), by_rank = vo.has("top_k");
    if (by_count == by_rank) StrictObject::fail("data.vocab", "give exactly one of min_count, top_k");
    std::size_t n = 0;
    if (by_count) {
      vo.optional("min_count", n);
      d.vocab = data::VocabRule::min_count(n);
    } else {
      vo.optional("top_k", n);
      d.vocab = data::VocabRule::top_k(n);
    }
    vo.finish();
  }
  o.optional("val_fraction", d.split.val_fraction);
  o.optional("test_fraction", d.split.test_fraction);
  if (o.has("held_out")) {
    std::vector<std::vector<std::string>> pairs;
    o.optional("held_out", pairs);
    d.split.held_out.clear();
    for (const auto& p : pairs) {
      if (p.size() != 2) StrictObject::fail("data.held_out", "each entry is [shape, color]");
      try {
        d.split.held_out.emplace_back(data::parse_shape(p[0]), data::parse_color(p[1]));
      } catch (const std::invalid_argument& e) {
        StrictObject::fail("data.held_out", e.what());
      }
    }
  }
  o.optional("prior_skew", d.split.prior_skew);
  o.optional("min_tv", d.split.min_tv);
  o.finish();
}

}  // namespace

std::string_view to_string(Precision p) { return p == Precision::single ? "single" : "double"; }

Precision parse_precision(std::string_view name) {
  if (name == "single") return Precision::single;
  if (name == "double") return Precision::double_;
  throw std::invalid_argument("unknown precision '" + std::string(name) + "' (expected single or double)");
}

void RunConfig::validate() const {
  try {
    trainer.validate();
    schedule.validate();
    RamenConfig m = model;
    m.visual_dim = data.features.visual_dim;
    m.spatial_dim = data.features.spatial_dim();
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (data.corpus.num_scenes == 0) throw ConfigError("data.num_scenes must be positive");
  if (data.corpus.questions_per_family == 0) throw ConfigError("data.questions_per_family must be positive");
  if (data.corpus.max_objects < 1 || data.corpus.max_objects > data::kMaxObjects) {
    throw ConfigError("data.max_objects must be in [1, 10]");
  }
  if (data.corpus.max_objects > data.features.num_regions) {
    throw ConfigError("data.max_objects exceeds data.num_regions");
  }
  if (data.corpus.families.empty()) throw ConfigError("data.families must not be empty");
  if (data.vocab.value == 0) throw ConfigError("data.vocab threshold must be positive");
  if (!(data.features.noise_sigma >= 0)) throw ConfigError("data.noise_sigma must be >= 0");
  if (data.features.spatial_grid < 2) throw ConfigError("data.spatial_grid must be >= 2");
  if (!(data.split.prior_skew > 0.5 && data.split.prior_skew < 1)) {
    throw ConfigError("data.prior_skew must be in (0.5, 1)");
  }
  if (ablation_variants.empty()) throw ConfigError("ablation.variants must not be empty");
  if (ablation_repeats == 0) throw ConfigError("ablation.repeats must be positive");
}

RunConfig parse_run_config(const std::string& json_text) {
  RunConfig c;
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    StrictObject o(j, "");
    o.optional("seed", c.seed);
    read_enum(o, "split_regime", c.split_regime, data::parse_split_regime);
    read_enum(o, "precision", c.precision, parse_precision);
    if (const Json* p = o.child("paths")) {
      StrictObject po(*p, "paths");
      po.optional("dataset", c.paths.dataset);
      po.optional("output", c.paths.output);
      po.optional("checkpoint", c.paths.checkpoint);
      po.optional("resume", c.paths.resume);
      po.finish();
    }
    if (const Json* d = o.child("data")) read_data(*d, c.data);
    if (const Json* m = o.child("model")) detail::read_into(*m, "model", c.model, true);
    if (const Json* t = o.child("trainer")) detail::read_into(*t, "trainer", c.trainer, false);
    if (const Json* s = o.child("schedule")) detail::read_into(*s, "schedule", c.schedule);
    if (const Json* a = o.child("ablation")) {
      StrictObject ao(*a, "ablation");
      if (ao.has("variants")) {
        std::vector<std::string> names;
        ao.optional("variants", names);
        c.ablation_variants.clear();
        for (const auto& n : names) {
          try {
            c.ablation_variants.push_back(parse_ablation(n));
          } catch (const std::invalid_argument& e) {
            StrictObject::fail("ablation.variants", e.what());
          }
        }
      }
      ao.optional("repeats", c.ablation_repeats);
      ao.finish();
    }
    o.finish();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& c) {
  Json variants = Json::array();
  for (auto a : c.ablation_variants) variants.push_back(to_string(a));
  Json j{{"seed", c.seed},
         {"split_regime", data::to_string(c.split_regime)},
         {"precision", to_string(c.precision)},
         {"paths",
          {{"dataset", c.paths.dataset},
           {"output", c.paths.output},
           {"checkpoint", c.paths.checkpoint},
           {"resume", c.paths.resume}}},
         {"data", data_json(c.data)},
         {"model", detail::to_json(c.model, true)},
         {"trainer", detail::to_json(c.trainer, false)},
         {"schedule", detail::to_json(c.schedule)},
         {"ablation", {{"variants", variants}, {"repeats", c.ablation_repeats}}}};
  return j.dump(2) + "\n";
}

std::uint64_t model_seed(const RunConfig& config, std::size_t repeat) {
  return derive_seed(config.seed, {kModelStream, repeat});
}

std::uint64_t trainer_seed(const RunConfig& config, std::size_t repeat) {
  return derive_seed(config.seed, {kTrainerStream, repeat});
}

}  // namespace ramen::cli
