// SPDX-License-Identifier: Apache-2.0
//
// RAMEN: question GRU, early fusion (regions concatenated with the question
// embedding, then batch normalization), a shared residual projector, late
// fusion (projected regions concatenated with the question again) and a
// bidirectional GRU aggregator feeding a swish + linear classifier head.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ramen/nn.hpp"
#include "ramen/tensor.hpp"

namespace ramen {

/// Bounding box in image-relative coordinates.
struct Box {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  bool operator==(const Box&) const = default;
};

/// Spatial code of a box: a grid x grid lattice spanning the box edge to
/// edge, each point contributing its (x, y) image coordinates, flattened
/// row-major (y outer, x inner). 2 * grid * grid values in [0, 1].
std::vector<double> encode_spatial(const Box& box, std::size_t grid = 16);

enum class Ablation { full, no_early_fusion, no_late_fusion, mean_pool };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view name);
inline constexpr Ablation kAllAblations[] = {Ablation::full, Ablation::no_early_fusion,
                                             Ablation::no_late_fusion, Ablation::mean_pool};

enum class LossKind { softmax, binary };

std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view name);

struct RamenConfig {
  std::size_t vocab_size = 64;
  std::size_t embedding_dim = 300;
  std::size_t visual_dim = 2048;
  std::size_t spatial_dim = 512;
  std::size_t question_dim = 1024;
  std::size_t projector_width = 1024;
  std::size_t aggregator_hidden = 1024;
  std::size_t pre_classifier_width = 2048;
  std::size_t num_answers = 28;
  Ablation ablation = Ablation::full;
  LossKind loss = LossKind::softmax;

  std::size_t region_dim() const { return visual_dim + spatial_dim; }
  std::size_t fused_dim() const { return region_dim() + question_dim; }
  std::size_t spatial_grid() const;
  /// Width entering the projector (regions alone without early fusion).
  std::size_t projector_input() const;
  /// Width of each element of the aggregated sequence.
  std::size_t late_fused_dim() const;
  /// Width of the vector `a` handed to the classifier head.
  std::size_t aggregate_dim() const;

  /// Throws std::invalid_argument on non-positive sizes or a spatial width
  /// that is not 2 * g * g.
  void validate() const;

  bool operator==(const RamenConfig&) const = default;
};

/// Names of fields that differ between two configs.
std::vector<std::string> config_differences(const RamenConfig& a, const RamenConfig& b);

/// A batch of B questions over scenes with a fixed region count N.
template <typename T>
struct ModelInput {
  Tensor<T> regions;  // [B*N x region_dim], item-major
  std::size_t num_regions = 0;
  std::vector<std::vector<std::size_t>> tokens;  // B token lists

  std::size_t batch_size() const { return tokens.size(); }
};

/// Intermediate activations of one forward pass.
template <typename T>
struct ForwardTrace {
  Tensor<T> question;    // q         [B x question_dim]
  Tensor<T> fused;       // c         [B*N x projector_input]
  Tensor<T> bimodal;     // b         [B*N x projector_width]
  Tensor<T> late_fused;  // b (+) q   [B*N x late_fused_dim]
  Tensor<T> aggregate;   // a         [B x aggregate_dim]
  Tensor<T> hidden;      //           [B x pre_classifier_width]
};

template <typename T>
class RamenModel {
 public:
  static constexpr std::size_t kPadToken = 0;

  RamenModel(const RamenConfig& config, std::uint64_t seed);

  const RamenConfig& config() const { return config_; }

  void set_phase(nn::Phase phase);
  nn::Phase phase() const { return input_bn_.mode; }
  /// Running statistics are frozen when off (used by gradient checks).
  void set_update_running_stats(bool on) { input_bn_.update_running_stats = on; }

  /// [B x question_dim] final states at each question's true length.
  Tensor<T> encode_questions(Tape<T>& tape,
                             const std::vector<std::vector<std::size_t>>& questions) const;
  Tensor<T> encode_question(Tape<T>& tape, const std::vector<std::size_t>& tokens) const;

  /// BatchNorm(r_i (+) q) for every region of every item; without early
  /// fusion the question is ignored and BatchNorm(r_i) is returned.
  Tensor<T> early_fuse(Tape<T>& tape, const Tensor<T>& regions, const Tensor<T>& question,
                       std::size_t num_regions);

  /// Logits [B x num_answers]; the configured ablation picks the variant.
  Tensor<T> forward(Tape<T>& tape, const ModelInput<T>& input, ForwardTrace<T>* trace = nullptr);

  /// Single instance: regions [N x region_dim] -> logits [num_answers].
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& regions,
                    const std::vector<std::size_t>& tokens, ForwardTrace<T>* trace = nullptr);

  /// Softmax mode uses the first answer of each set; binary mode scores
  /// every listed answer as a positive label.
  Tensor<T> answer_loss(Tape<T>& tape, const Tensor<T>& logits,
                        const std::vector<std::vector<std::size_t>>& answers) const;

  /// Learnable tensors in a fixed order.
  nn::NamedTensors<T> parameters() const;
  /// Non-learnable state (BatchNorm running statistics).
  nn::NamedTensors<T> buffers() const;
  std::size_t parameter_count() const;

  nn::Embedding<T>& embedding() { return embedding_; }

 private:
  RamenConfig config_;
  nn::Embedding<T> embedding_;
  nn::GruCell<T> question_gru_;
  nn::BatchNorm<T> input_bn_;
  nn::ResidualMlp<T> projector_;
  std::optional<nn::GruCell<T>> aggregator_fwd_;
  std::optional<nn::GruCell<T>> aggregator_bwd_;
  nn::LinearLayer<T> pre_classifier_;
  nn::LinearLayer<T> classifier_;
};

/// Argmax per row; ties go to the lowest index.
template <typename T>
std::vector<std::size_t> predict(const Tensor<T>& logits);

/// Element count of every learnable tensor for a config.
std::size_t parameter_count(const RamenConfig& config);

extern template class RamenModel<float>;
extern template class RamenModel<double>;

}  // namespace ramen
