// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "ramen/dataset.hpp"

namespace ramen::data {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct LineContext {
  std::string file;
  std::size_t line = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(file + ":" + std::to_string(line) + ": " + what);
  }
};

void check_keys(const Json& j, std::initializer_list<const char*> keys, const LineContext& ctx) {
  if (!j.is_object()) ctx.fail("record is not a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) ctx.fail("unknown key '" + key + "'");
  for (const char* key : keys)
    if (!j.contains(key)) ctx.fail(std::string("missing key '") + key + "'");
}

template <typename T>
T field(const Json& j, const char* key, const LineContext& ctx) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    ctx.fail(std::string("bad value for key '") + key + "'");
  }
}

Json scene_json(const Scene& s, std::uint64_t feature_seed) {
  Json objects = Json::array();
  for (const auto& o : s.objects) {
    objects.push_back(Json{{"shape", to_string(o.shape)},
                           {"color", to_string(o.color)},
                           {"size", to_string(o.size)},
                           {"box", {o.box.x0, o.box.y0, o.box.x1, o.box.y1}}});
  }
  return Json{{"id", s.id},
              {"seed", s.seed},
              {"attempt", s.attempt},
              {"feature_seed", feature_seed},
              {"objects", std::move(objects)}};
}

ObjectSpec object_from(const Json& j, const LineContext& ctx) {
  check_keys(j, {"shape", "color", "size", "box"}, ctx);
  ObjectSpec o;
  try {
    o.shape = parse_shape(field<std::string>(j, "shape", ctx));
    o.color = parse_color(field<std::string>(j, "color", ctx));
    o.size = parse_size(field<std::string>(j, "size", ctx));
  } catch (const std::invalid_argument& e) {
    ctx.fail(e.what());
  }
  const auto box = field<std::vector<double>>(j, "box", ctx);
  if (box.size() != 4) ctx.fail("box must have 4 coordinates");
  o.box = Box{box[0], box[1], box[2], box[3]};
  for (double v : box)
    if (!(v >= 0.0 && v <= 1.0)) ctx.fail("box coordinate outside [0, 1]");
  if (!(o.box.x0 < o.box.x1 && o.box.y0 < o.box.y1)) ctx.fail("degenerate box");
  return o;
}

Json item_json(const QAItem& it) {
  return Json{{"id", it.id},
              {"scene_id", it.scene_id},
              {"family", to_string(it.family)},
              {"question", it.question},
              {"tokens", it.tokens},
              {"answer", it.answer},
              {"split", to_string(it.split)}};
}

QAItem item_from(const Json& j, const LineContext& ctx) {
  check_keys(j, {"id", "scene_id", "family", "question", "tokens", "answer", "split"}, ctx);
  QAItem it;
  it.id = field<std::uint64_t>(j, "id", ctx);
  it.scene_id = field<std::uint64_t>(j, "scene_id", ctx);
  it.question = field<std::string>(j, "question", ctx);
  it.tokens = field<std::vector<std::size_t>>(j, "tokens", ctx);
  it.answer = field<std::string>(j, "answer", ctx);
  try {
    it.family = parse_family(field<std::string>(j, "family", ctx));
    it.split = parse_split(field<std::string>(j, "split", ctx));
  } catch (const std::invalid_argument& e) {
    ctx.fail(e.what());
  }
  return it;
}

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  LineContext ctx{path.string(), 0};
  std::string line;
  while (std::getline(in, line)) {
    ++ctx.line;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      ctx.fail(std::string("malformed JSON: ") + e.what());
    }
    fn(j, ctx);
  }
}

void write_lines(const fs::path& path, const std::vector<Json>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

const Scene& Dataset::scene(std::uint64_t id) const {
  if (id >= scenes.size() || scenes[id].id != id) {
    throw DataError("no scene with id " + std::to_string(id));
  }
  return scenes[id];
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<Json> scenes, items;
  for (const auto& s : dataset.scenes) scenes.push_back(scene_json(s, dataset.feature_seed));
  for (const auto& it : dataset.items) items.push_back(item_json(it));
  write_lines(dir / kScenesFile, scenes);
  write_lines(dir / kQuestionsFile, items);
}

Dataset read_dataset(const fs::path& dir) {
  Dataset d;
  std::optional<std::uint64_t> feature_seed;
  for_each_line(dir / kScenesFile, [&](const Json& j, const LineContext& ctx) {
    check_keys(j, {"id", "seed", "attempt", "feature_seed", "objects"}, ctx);
    Scene s;
    s.id = field<std::uint64_t>(j, "id", ctx);
    s.seed = field<std::uint64_t>(j, "seed", ctx);
    s.attempt = field<std::uint32_t>(j, "attempt", ctx);
    const auto fseed = field<std::uint64_t>(j, "feature_seed", ctx);
    if (feature_seed && *feature_seed != fseed) ctx.fail("feature_seed differs from earlier scenes");
    feature_seed = fseed;
    if (s.id != d.scenes.size()) ctx.fail("scene ids must be consecutive from 0");
    const auto& objects = j.at("objects");
    if (!objects.is_array()) ctx.fail("bad value for key 'objects'");
    for (const auto& o : objects) s.objects.push_back(object_from(o, ctx));
    if (s.objects.empty() || s.objects.size() > kMaxObjects) ctx.fail("scene must hold 1..10 objects");
    d.scenes.push_back(std::move(s));
  });
  d.feature_seed = feature_seed.value_or(0);
  for_each_line(dir / kQuestionsFile, [&](const Json& j, const LineContext& ctx) {
    auto it = item_from(j, ctx);
    if (it.scene_id >= d.scenes.size()) ctx.fail("unknown scene_id " + std::to_string(it.scene_id));
    d.items.push_back(std::move(it));
  });
  return d;
}

}  // namespace ramen::data
