// SPDX-License-Identifier: Apache-2.0

#include "ramen/features.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "ramen/random.hpp"

namespace ramen::data {
namespace {

constexpr double kUniqueWeight = 1.5;
constexpr std::uint64_t kCodebookStream = 0xc0debeefULL;
constexpr std::uint64_t kNoiseStream = 0x0153ULL;
constexpr std::uint64_t kPaddingStream = 0xbad0ULL;

// Factor layout: shapes, colors, sizes, one per triple, background.
constexpr std::size_t kNumFactors = kNumShapes + kNumColors + kNumSizes + kNumTriples + 1;

void normalize(std::span<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

}  // namespace

Codebook::Codebook(std::size_t visual_dim, std::uint64_t seed) : dim_(visual_dim) {
  if (visual_dim == 0) throw std::invalid_argument("codebook: visual_dim must be positive");
  Rng rng(derive_seed(seed, {kCodebookStream}));
  Eigen::MatrixXd factors(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(kNumFactors));
  for (Eigen::Index j = 0; j < factors.cols(); ++j)
    for (Eigen::Index i = 0; i < factors.rows(); ++i) factors(i, j) = normal(rng);
  if (dim_ >= kNumFactors) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(factors);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(factors.rows(), factors.cols());
    factors = q;
  } else {
    for (Eigen::Index j = 0; j < factors.cols(); ++j) factors.col(j).normalize();
  }

  entries_.assign((kNumTriples + 1) * dim_, 0.0);
  for (std::size_t s = 0; s < kNumShapes; ++s)
    for (std::size_t c = 0; c < kNumColors; ++c)
      for (std::size_t z = 0; z < kNumSizes; ++z) {
        const std::size_t t = triple_index(static_cast<ShapeKind>(s), static_cast<Color>(c),
                                           static_cast<Size>(z));
        const Eigen::Index fs = static_cast<Eigen::Index>(s);
        const Eigen::Index fc = static_cast<Eigen::Index>(kNumShapes + c);
        const Eigen::Index fz = static_cast<Eigen::Index>(kNumShapes + kNumColors + z);
        const Eigen::Index fu = static_cast<Eigen::Index>(kNumShapes + kNumColors + kNumSizes + t);
        std::span<double> e(entries_.data() + t * dim_, dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
          const auto r = static_cast<Eigen::Index>(i);
          e[i] = factors(r, fs) + factors(r, fc) + factors(r, fz) + kUniqueWeight * factors(r, fu);
        }
        normalize(e);
      }
  std::span<double> bg(entries_.data() + kNumTriples * dim_, dim_);
  for (std::size_t i = 0; i < dim_; ++i)
    bg[i] = factors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(kNumFactors - 1));
  normalize(bg);
}

std::size_t Codebook::triple_index(ShapeKind s, Color c, Size z) {
  return (static_cast<std::size_t>(s) * kNumColors + static_cast<std::size_t>(c)) * kNumSizes +
         static_cast<std::size_t>(z);
}

std::span<const double> Codebook::entry(std::size_t triple) const {
  if (triple > kNumTriples) throw std::out_of_range("codebook: entry index out of range");
  return std::span<const double>(entries_).subspan(triple * dim_, dim_);
}

Featurizer::Featurizer(const FeatureConfig& config)
    : config_(config), codebook_(config.visual_dim, config.seed) {
  if (config_.num_regions == 0) throw std::invalid_argument("featurizer: num_regions must be positive");
  if (config_.spatial_grid < 2) throw std::invalid_argument("featurizer: spatial_grid must be >= 2");
  if (!(config_.noise_sigma >= 0)) throw std::invalid_argument("featurizer: noise_sigma must be >= 0");
}

RegionSet Featurizer::featurize(const Scene& scene) const {
  const std::size_t n = config_.num_regions;
  if (scene.objects.size() > n) {
    throw std::invalid_argument("featurize: scene " + std::to_string(scene.id) + " has " +
                                std::to_string(scene.objects.size()) + " objects for " +
                                std::to_string(n) + " regions");
  }
  const std::size_t vd = config_.visual_dim;
  RegionSet set{n, config_.region_dim(), std::vector<float>(n * config_.region_dim())};
  const double component_sigma = config_.noise_sigma / std::sqrt(static_cast<double>(vd));

  Rng pad_rng(derive_seed(config_.seed, {kPaddingStream, scene.id}));
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_object = i < scene.objects.size();
    std::span<const double> base;
    Box box;
    if (is_object) {
      const auto& o = scene.objects[i];
      base = codebook_.entry(o.shape, o.color, o.size);
      box = o.box;
    } else {
      base = codebook_.background();
      const double w = uniform(pad_rng, 0.05, 0.5), h = uniform(pad_rng, 0.05, 0.5);
      const double x0 = uniform(pad_rng, 0.0, 1.0 - w), y0 = uniform(pad_rng, 0.0, 1.0 - h);
      box = Box{x0, y0, x0 + w, y0 + h};
    }
    Rng noise_rng(derive_seed(config_.seed, {kNoiseStream, scene.id, i}));
    float* row = set.values.data() + i * set.region_dim;
    for (std::size_t j = 0; j < vd; ++j) {
      const double noise = component_sigma > 0 ? component_sigma * normal(noise_rng) : 0.0;
      row[j] = static_cast<float>(base[j] + noise);
    }
    const auto spatial = encode_spatial(box, config_.spatial_grid);
    for (std::size_t j = 0; j < spatial.size(); ++j) row[vd + j] = static_cast<float>(spatial[j]);
  }
  return set;
}

RegionSet featurize_scene(const Scene& scene, double noise_sigma, std::uint64_t seed) {
  FeatureConfig cfg;
  cfg.noise_sigma = noise_sigma;
  cfg.seed = seed;
  return Featurizer(cfg).featurize(scene);
}

}  // namespace ramen::data
