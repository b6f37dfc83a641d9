// SPDX-License-Identifier: Apache-2.0

#include "ramen/scene.hpp"

#include <algorithm>
#include <stdexcept>

#include "ramen/random.hpp"

namespace ramen::data {
namespace {

template <typename Names>
std::size_t find_name(const Names& names, std::string_view name, const char* what) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

bool intersects(const Box& a, const Box& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

// Side lengths in image units; large objects are roughly twice the size.
Box sample_box(Rng& rng, Size size) {
  const double side = size == Size::small ? uniform(rng, 0.08, 0.12) : uniform(rng, 0.16, 0.22);
  const double aspect = uniform(rng, 0.8, 1.25);
  const double w = std::min(side * aspect, 0.3), h = std::min(side / aspect, 0.3);
  const double x0 = uniform(rng, 0.0, 1.0 - w);
  const double y0 = uniform(rng, 0.0, 1.0 - h);
  return Box{x0, y0, x0 + w, y0 + h};
}

bool try_layout(Rng& rng, std::size_t max_objects, std::vector<ObjectSpec>& objects) {
  const auto count = 1 + static_cast<std::size_t>(uniform_index(rng, max_objects));
  objects.clear();
  for (std::size_t i = 0; i < count; ++i) {
    ObjectSpec obj;
    obj.shape = static_cast<ShapeKind>(uniform_index(rng, kNumShapes));
    obj.color = static_cast<Color>(uniform_index(rng, kNumColors));
    obj.size = static_cast<Size>(uniform_index(rng, kNumSizes));
    bool placed = false;
    for (std::size_t tries = 0; tries < kMaxPlacementTries && !placed; ++tries) {
      obj.box = sample_box(rng, obj.size);
      placed = std::none_of(objects.begin(), objects.end(),
                            [&](const ObjectSpec& o) { return intersects(o.box, obj.box); });
    }
    if (!placed) return false;
    objects.push_back(obj);
  }
  return true;
}

}  // namespace

std::string_view to_string(ShapeKind s) { return kShapeNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Size s) { return kSizeNames[static_cast<std::size_t>(s)]; }

ShapeKind parse_shape(std::string_view name) {
  return static_cast<ShapeKind>(find_name(kShapeNames, name, "shape"));
}
Color parse_color(std::string_view name) {
  return static_cast<Color>(find_name(kColorNames, name, "color"));
}
Size parse_size(std::string_view name) {
  return static_cast<Size>(find_name(kSizeNames, name, "size"));
}

Scene generate_scene(std::uint64_t seed, std::uint64_t id, std::size_t max_objects) {
  if (max_objects < 1 || max_objects > kMaxObjects) {
    throw std::invalid_argument("generate_scene: max_objects must be in [1, 10], got " +
                                std::to_string(max_objects));
  }
  Scene scene;
  scene.id = id;
  scene.seed = seed;
  for (std::uint32_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, {id, attempt}));
    if (try_layout(rng, max_objects, scene.objects)) {
      scene.attempt = attempt;
      return scene;
    }
  }
}

double box_iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0);
  const double area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
  return inter / (area_a + area_b - inter);
}

}  // namespace ramen::data
