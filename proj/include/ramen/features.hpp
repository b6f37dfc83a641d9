// SPDX-License-Identifier: Apache-2.0
//
// Region featurization: each object becomes a codebook vector for its
// (shape, color, size) triple plus Gaussian noise, followed by the spatial
// code of its box. Scenes are padded to a fixed region count with
// background regions.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ramen/scene.hpp"

namespace ramen::data {

inline constexpr std::size_t kNumTriples = kNumShapes * kNumColors * kNumSizes;

struct FeatureConfig {
  std::size_t visual_dim = 2048;
  std::size_t spatial_grid = 16;
  std::size_t num_regions = 15;
  /// Norm of the noise added to each unit-norm codebook vector, in
  /// expectation (per-component standard deviation sigma / sqrt(dim)).
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  std::size_t spatial_dim() const { return 2 * spatial_grid * spatial_grid; }
  std::size_t region_dim() const { return visual_dim + spatial_dim(); }
};

/// Unit-norm vectors, one per attribute triple plus a background entry.
/// Each triple vector mixes one factor per attribute with a factor unique to
/// the triple; factors are orthonormal when visual_dim allows it, so two
/// triples sharing k attributes have cosine k / (3 + 1.5^2).
class Codebook {
 public:
  Codebook(std::size_t visual_dim, std::uint64_t seed);

  static std::size_t triple_index(ShapeKind s, Color c, Size z);

  std::size_t dim() const { return dim_; }
  std::span<const double> entry(std::size_t triple) const;
  std::span<const double> entry(ShapeKind s, Color c, Size z) const {
    return entry(triple_index(s, c, z));
  }
  std::span<const double> background() const { return entry(kNumTriples); }

 private:
  std::size_t dim_;
  std::vector<double> entries_;  // (kNumTriples + 1) x dim
};

/// Regions of one scene as a row-major [num_regions x region_dim] block.
struct RegionSet {
  std::size_t num_regions = 0;
  std::size_t region_dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * region_dim, region_dim);
  }
};

class Featurizer {
 public:
  explicit Featurizer(const FeatureConfig& config);

  const FeatureConfig& config() const { return config_; }
  const Codebook& codebook() const { return codebook_; }

  /// Objects in scene order, then background padding. Throws if the scene
  /// has more objects than regions.
  RegionSet featurize(const Scene& scene) const;

 private:
  FeatureConfig config_;
  Codebook codebook_;
};

/// Default-dimension featurization with the given noise and seed.
RegionSet featurize_scene(const Scene& scene, double noise_sigma, std::uint64_t seed);

}  // namespace ramen::data
