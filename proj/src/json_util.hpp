// SPDX-License-Identifier: Apache-2.0
//
// Strict JSON object reading shared by the config and checkpoint code.

#pragma once

#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>
#include <string>

#include "ramen/model.hpp"
#include "ramen/train.hpp"

namespace ramen::detail {

using Json = nlohmann::ordered_json;

/// Reads keys of one JSON object; finish() rejects keys never asked for.
/// Errors are std::invalid_argument prefixed with the dotted key path.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void optional(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      fail(key_path(key), "wrong type");
    }
  }

  template <typename T>
  void required(const char* key, T& out) {
    if (!j_.contains(key)) fail(key_path(key), "missing");
    optional(key, out);
  }

  /// Child object, or nullptr when absent.
  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  const Json& required_child(const char* key) {
    if (!has(key)) fail(key_path(key), "missing");
    return *child(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(key_path(key.c_str()), "unknown key");
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw std::invalid_argument(where + ": " + what);
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// With `widths_only`, the sizes a run derives from its data (vocabulary,
/// region widths, answer count) are left out.
inline Json to_json(const RamenConfig& c, bool widths_only = false) {
  Json j;
  if (!widths_only) {
    j["vocab_size"] = c.vocab_size;
    j["visual_dim"] = c.visual_dim;
    j["spatial_dim"] = c.spatial_dim;
    j["num_answers"] = c.num_answers;
  }
  j["embedding_dim"] = c.embedding_dim;
  j["question_dim"] = c.question_dim;
  j["projector_width"] = c.projector_width;
  j["aggregator_hidden"] = c.aggregator_hidden;
  j["pre_classifier_width"] = c.pre_classifier_width;
  j["ablation"] = to_string(c.ablation);
  j["loss"] = to_string(c.loss);
  return j;
}

/// Overwrites fields present in `j` (all optional).
inline void read_into(const Json& j, const std::string& path, RamenConfig& c,
                      bool widths_only = false) {
  StrictObject o(j, path);
  if (!widths_only) {
    o.optional("vocab_size", c.vocab_size);
    o.optional("visual_dim", c.visual_dim);
    o.optional("spatial_dim", c.spatial_dim);
    o.optional("num_answers", c.num_answers);
  }
  o.optional("embedding_dim", c.embedding_dim);
  o.optional("question_dim", c.question_dim);
  o.optional("projector_width", c.projector_width);
  o.optional("aggregator_hidden", c.aggregator_hidden);
  o.optional("pre_classifier_width", c.pre_classifier_width);
  std::string name;
  if (o.has("ablation")) {
    o.optional("ablation", name);
    try {
      c.ablation = parse_ablation(name);
    } catch (const std::invalid_argument& e) {
      StrictObject::fail(o.key_path("ablation"), e.what());
    }
  }
  if (o.has("loss")) {
    o.optional("loss", name);
    try {
      c.loss = parse_loss_kind(name);
    } catch (const std::invalid_argument& e) {
      StrictObject::fail(o.key_path("loss"), e.what());
    }
  }
  o.finish();
}

/// Run configs derive the trainer seed, so they leave it out.
inline Json to_json(const train::TrainerConfig& c, bool with_seed = true) {
  Json j{{"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"early_stop_patience", c.early_stop_patience}};
  if (with_seed) j["seed"] = c.seed;
  j["zero_regions"] = c.zero_regions;
  j["check_finite"] = c.check_finite;
  return j;
}

inline void read_into(const Json& j, const std::string& path, train::TrainerConfig& c,
                      bool with_seed = true) {
  StrictObject o(j, path);
  o.optional("batch_size", c.batch_size);
  o.optional("max_epochs", c.max_epochs);
  o.optional("early_stop_patience", c.early_stop_patience);
  if (with_seed) o.optional("seed", c.seed);
  o.optional("zero_regions", c.zero_regions);
  o.optional("check_finite", c.check_finite);
  o.finish();
}

inline Json to_json(const train::Schedule& s) {
  return Json{{"warmup_epochs", s.warmup_epochs},
              {"warmup_rate", s.warmup_rate},
              {"lr_scale", s.lr_scale},
              {"plateau_lr", s.plateau_lr},
              {"plateau_until_epoch", s.plateau_until_epoch},
              {"decay_factor", s.decay_factor},
              {"decay_every", s.decay_every}};
}

inline void read_into(const Json& j, const std::string& path, train::Schedule& s) {
  StrictObject o(j, path);
  o.optional("warmup_epochs", s.warmup_epochs);
  o.optional("warmup_rate", s.warmup_rate);
  o.optional("lr_scale", s.lr_scale);
  o.optional("plateau_lr", s.plateau_lr);
  o.optional("plateau_until_epoch", s.plateau_until_epoch);
  o.optional("decay_factor", s.decay_factor);
  o.optional("decay_every", s.decay_every);
  o.finish();
}

}  // namespace ramen::detail
