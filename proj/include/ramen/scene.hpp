// SPDX-License-Identifier: Apache-2.0
//
// Synthetic scenes of attributed objects.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ramen/model.hpp"

namespace ramen::data {

enum class ShapeKind : std::uint8_t { cube, sphere, cylinder };
enum class Color : std::uint8_t { red, green, blue, purple, gray, brown, cyan, yellow };
enum class Size : std::uint8_t { small, large };

inline constexpr std::size_t kNumShapes = 3;
inline constexpr std::size_t kNumColors = 8;
inline constexpr std::size_t kNumSizes = 2;

inline constexpr std::array<std::string_view, kNumShapes> kShapeNames = {"cube", "sphere",
                                                                         "cylinder"};
inline constexpr std::array<std::string_view, kNumShapes> kShapePlurals = {"cubes", "spheres",
                                                                           "cylinders"};
inline constexpr std::array<std::string_view, kNumColors> kColorNames = {
    "red", "green", "blue", "purple", "gray", "brown", "cyan", "yellow"};
inline constexpr std::array<std::string_view, kNumSizes> kSizeNames = {"small", "large"};

std::string_view to_string(ShapeKind s);
std::string_view to_string(Color c);
std::string_view to_string(Size s);
ShapeKind parse_shape(std::string_view name);
Color parse_color(std::string_view name);
Size parse_size(std::string_view name);

struct ObjectSpec {
  ShapeKind shape = ShapeKind::cube;
  Color color = Color::red;
  Size size = Size::small;
  Box box;

  bool operator==(const ObjectSpec&) const = default;
};

struct Scene {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  /// Number of placement failures before this layout; each failure re-draws
  /// the scene from a perturbed sub-seed.
  std::uint32_t attempt = 0;
  std::vector<ObjectSpec> objects;

  bool operator==(const Scene&) const = default;
};

inline constexpr std::size_t kMaxObjects = 10;
inline constexpr std::size_t kMaxPlacementTries = 1000;

/// Uniform object count in [1, max_objects], uniform attributes, and
/// non-intersecting boxes. Deterministic in (seed, id).
Scene generate_scene(std::uint64_t seed, std::uint64_t id, std::size_t max_objects);

double box_iou(const Box& a, const Box& b);

}  // namespace ramen::data
