// SPDX-License-Identifier: Apache-2.0

#include "ramen/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ramen {

std::vector<double> encode_spatial(const Box& box, std::size_t grid) {
  if (grid < 2) throw std::invalid_argument("encode_spatial: grid must be at least 2");
  if (!(box.x0 >= 0 && box.y0 >= 0 && box.x1 <= 1 && box.y1 <= 1)) {
    throw std::invalid_argument("encode_spatial: box outside the unit square");
  }
  if (!(box.x1 > box.x0) || !(box.y1 > box.y0)) {
    throw std::invalid_argument("encode_spatial: degenerate box");
  }
  std::vector<double> code;
  code.reserve(2 * grid * grid);
  const double last = static_cast<double>(grid - 1);
  for (std::size_t iy = 0; iy < grid; ++iy) {
    // Endpoints are assigned exactly so the code is bounded by the box.
    const double fy = static_cast<double>(iy) / last;
    const double y = iy + 1 == grid ? box.y1 : box.y0 + fy * (box.y1 - box.y0);
    for (std::size_t ix = 0; ix < grid; ++ix) {
      const double fx = static_cast<double>(ix) / last;
      const double x = ix + 1 == grid ? box.x1 : box.x0 + fx * (box.x1 - box.x0);
      code.push_back(x);
      code.push_back(y);
    }
  }
  return code;
}

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_early_fusion: return "no_early_fusion";
    case Ablation::no_late_fusion: return "no_late_fusion";
    case Ablation::mean_pool: return "mean_pool";
  }
  return "unknown";
}

Ablation parse_ablation(std::string_view name) {
  for (auto a : kAllAblations)
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown ablation '" + std::string(name) +
                              "' (expected full, no_early_fusion, no_late_fusion, mean_pool)");
}

std::string_view to_string(LossKind k) { return k == LossKind::softmax ? "softmax" : "binary"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "softmax") return LossKind::softmax;
  if (name == "binary") return LossKind::binary;
  throw std::invalid_argument("unknown loss '" + std::string(name) + "' (expected softmax, binary)");
}

std::size_t RamenConfig::spatial_grid() const {
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(spatial_dim / 2.0)));
  return g;
}

std::size_t RamenConfig::projector_input() const {
  return ablation == Ablation::no_early_fusion ? region_dim() : fused_dim();
}

std::size_t RamenConfig::late_fused_dim() const {
  return ablation == Ablation::no_late_fusion ? projector_width : projector_width + question_dim;
}

std::size_t RamenConfig::aggregate_dim() const {
  return ablation == Ablation::mean_pool ? late_fused_dim() : 2 * aggregator_hidden;
}

void RamenConfig::validate() const {
  const std::pair<const char*, std::size_t> sizes[] = {
      {"vocab_size", vocab_size},           {"embedding_dim", embedding_dim},
      {"visual_dim", visual_dim},           {"spatial_dim", spatial_dim},
      {"question_dim", question_dim},       {"projector_width", projector_width},
      {"aggregator_hidden", aggregator_hidden}, {"pre_classifier_width", pre_classifier_width},
      {"num_answers", num_answers}};
  for (const auto& [name, v] : sizes) {
    if (v == 0) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
  }
  const std::size_t g = spatial_grid();
  if (g < 2 || 2 * g * g != spatial_dim) {
    throw std::invalid_argument("config: spatial_dim " + std::to_string(spatial_dim) +
                                " is not 2*g*g for an integer grid g >= 2");
  }
  if (vocab_size < 2) throw std::invalid_argument("config: vocab_size must include the pad token");
}

std::vector<std::string> config_differences(const RamenConfig& a, const RamenConfig& b) {
  std::vector<std::string> diff;
  auto check = [&](const char* name, auto x, auto y) {
    if (x != y) diff.emplace_back(name);
  };
  check("vocab_size", a.vocab_size, b.vocab_size);
  check("embedding_dim", a.embedding_dim, b.embedding_dim);
  check("visual_dim", a.visual_dim, b.visual_dim);
  check("spatial_dim", a.spatial_dim, b.spatial_dim);
  check("question_dim", a.question_dim, b.question_dim);
  check("projector_width", a.projector_width, b.projector_width);
  check("aggregator_hidden", a.aggregator_hidden, b.aggregator_hidden);
  check("pre_classifier_width", a.pre_classifier_width, b.pre_classifier_width);
  check("num_answers", a.num_answers, b.num_answers);
  check("ablation", a.ablation, b.ablation);
  check("loss", a.loss, b.loss);
  return diff;
}

template <typename T>
RamenModel<T>::RamenModel(const RamenConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  embedding_ = nn::Embedding<T>::create(config_.vocab_size, config_.embedding_dim, rng);
  question_gru_ = nn::GruCell<T>::create(config_.embedding_dim, config_.question_dim, rng);
  input_bn_ = nn::BatchNorm<T>::create(config_.projector_input());
  projector_ = nn::ResidualMlp<T>::create(config_.projector_input(), config_.projector_width, rng);
  if (config_.ablation != Ablation::mean_pool) {
    aggregator_fwd_ = nn::GruCell<T>::create(config_.late_fused_dim(), config_.aggregator_hidden, rng);
    aggregator_bwd_ = nn::GruCell<T>::create(config_.late_fused_dim(), config_.aggregator_hidden, rng);
  }
  pre_classifier_ =
      nn::LinearLayer<T>::create(config_.aggregate_dim(), config_.pre_classifier_width, rng);
  classifier_ = nn::LinearLayer<T>::create(config_.pre_classifier_width, config_.num_answers, rng);
}

template <typename T>
void RamenModel<T>::set_phase(nn::Phase phase) {
  input_bn_.mode = phase;
}

template <typename T>
Tensor<T> RamenModel<T>::encode_questions(
    Tape<T>& tape, const std::vector<std::vector<std::size_t>>& questions) const {
  if (questions.empty()) throw std::invalid_argument("encode_questions: empty batch");
  const std::size_t batch = questions.size();
  std::size_t steps = 0;
  std::vector<std::size_t> lengths(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (questions[b].empty()) throw std::invalid_argument("encode_question: empty question");
    for (auto id : questions[b]) {
      if (id >= config_.vocab_size) {
        throw std::invalid_argument("encode_question: unknown token id " + std::to_string(id) +
                                    " (vocabulary size " + std::to_string(config_.vocab_size) +
                                    ")");
      }
    }
    lengths[b] = questions[b].size();
    steps = std::max(steps, lengths[b]);
  }
  // Time-major ids, right-padded.
  std::vector<std::size_t> ids(steps * batch, kPadToken);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < lengths[b]; ++t) ids[t * batch + b] = questions[b][t];
  auto embedded = embedding_.lookup(tape, ids);
  return nn::gru_run(tape, question_gru_, embedded, batch, steps, nn::SequenceLayout::time_major,
                     false, &lengths);
}

template <typename T>
Tensor<T> RamenModel<T>::encode_question(Tape<T>& tape,
                                         const std::vector<std::size_t>& tokens) const {
  auto q = encode_questions(tape, {tokens});
  return ops::reshape(tape, q, Shape{config_.question_dim});
}

namespace {

std::vector<std::size_t> repeat_index(std::size_t batch, std::size_t times) {
  std::vector<std::size_t> idx(batch * times);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < times; ++i) idx[b * times + i] = b;
  return idx;
}

void expect_shape(const char* stage, const Shape& got, const Shape& want) {
  if (got != want) {
    throw DimensionError(std::string("ramen: ") + stage + " has shape " + shape_string(got) +
                         ", expected " + shape_string(want));
  }
}

}  // namespace

template <typename T>
Tensor<T> RamenModel<T>::early_fuse(Tape<T>& tape, const Tensor<T>& regions,
                                    const Tensor<T>& question, std::size_t num_regions) {
  if (num_regions == 0) throw std::invalid_argument("early_fuse: no regions");
  if (regions.rank() != 2 || regions.cols() != config_.region_dim() ||
      regions.rows() % num_regions != 0) {
    throw DimensionError("early_fuse: regions " + shape_string(regions.shape()) +
                         " are not groups of " + std::to_string(num_regions) + " x " +
                         std::to_string(config_.region_dim()));
  }
  if (config_.ablation == Ablation::no_early_fusion) return input_bn_.forward(tape, regions);

  const std::size_t batch = regions.rows() / num_regions;
  Tensor<T> q = question.rank() == 1 ? ops::reshape(tape, question, Shape{1, question.numel()})
                                     : question;
  expect_shape("question embedding", q.shape(), Shape{batch, config_.question_dim});
  const auto idx = repeat_index(batch, num_regions);
  auto q_rows = ops::take_rows<T>(tape, q, idx);
  auto fused = ops::concat(tape, {regions, q_rows}, 1);
  return input_bn_.forward(tape, fused);
}

template <typename T>
Tensor<T> RamenModel<T>::forward(Tape<T>& tape, const ModelInput<T>& input,
                                 ForwardTrace<T>* trace) {
  const std::size_t batch = input.batch_size();
  const std::size_t n = input.num_regions;
  if (batch == 0 || n == 0) throw std::invalid_argument("forward: empty batch");
  expect_shape("region matrix", input.regions.shape(), Shape{batch * n, config_.region_dim()});

  auto q = encode_questions(tape, input.tokens);
  expect_shape("question embedding", q.shape(), Shape{batch, config_.question_dim});

  auto c = early_fuse(tape, input.regions, q, n);
  expect_shape("fused regions", c.shape(), Shape{batch * n, config_.projector_input()});

  auto b = projector_.forward(tape, c);
  expect_shape("bimodal embeddings", b.shape(), Shape{batch * n, config_.projector_width});

  Tensor<T> late = b;
  if (config_.ablation != Ablation::no_late_fusion) {
    const auto idx = repeat_index(batch, n);
    late = ops::concat(tape, {b, ops::take_rows<T>(tape, q, idx)}, 1);
  }
  expect_shape("late-fused sequence", late.shape(), Shape{batch * n, config_.late_fused_dim()});

  Tensor<T> a;
  if (config_.ablation == Ablation::mean_pool) {
    a = ops::row_group_mean(tape, late, n);
  } else {
    auto fwd = nn::gru_run(tape, *aggregator_fwd_, late, batch, n, nn::SequenceLayout::batch_major,
                           false);
    auto bwd = nn::gru_run(tape, *aggregator_bwd_, late, batch, n, nn::SequenceLayout::batch_major,
                           true);
    a = ops::concat(tape, {fwd, bwd}, 1);
  }
  expect_shape("aggregate", a.shape(), Shape{batch, config_.aggregate_dim()});

  auto hidden = ops::swish(tape, pre_classifier_.forward(tape, a));
  auto logits = classifier_.forward(tape, hidden);
  expect_shape("logits", logits.shape(), Shape{batch, config_.num_answers});

  if (trace) *trace = ForwardTrace<T>{q, c, b, late, a, hidden};
  return logits;
}

template <typename T>
Tensor<T> RamenModel<T>::forward(Tape<T>& tape, const Tensor<T>& regions,
                                 const std::vector<std::size_t>& tokens, ForwardTrace<T>* trace) {
  if (regions.rank() != 2) {
    throw DimensionError("forward: regions must be [N x region_dim], got " +
                         shape_string(regions.shape()));
  }
  ModelInput<T> input{regions, regions.rows(), {tokens}};
  auto logits = forward(tape, input, trace);
  return ops::reshape(tape, logits, Shape{config_.num_answers});
}

template <typename T>
Tensor<T> RamenModel<T>::answer_loss(Tape<T>& tape, const Tensor<T>& logits,
                                     const std::vector<std::vector<std::size_t>>& answers) const {
  if (logits.rank() != 2 || answers.size() != logits.rows()) {
    throw DimensionError("answer_loss: " + std::to_string(answers.size()) + " answer sets for " +
                         shape_string(logits.shape()));
  }
  for (const auto& set : answers)
    if (set.empty()) throw std::invalid_argument("answer_loss: empty answer set");

  if (config_.loss == LossKind::softmax) {
    std::vector<std::size_t> targets;
    targets.reserve(answers.size());
    for (const auto& set : answers) targets.push_back(set.front());
    return ops::softmax_cross_entropy<T>(tape, logits, targets);
  }
  Tensor<T> multi_hot(logits.shape());
  auto v = multi_hot.data();
  const std::size_t c = logits.cols();
  for (std::size_t r = 0; r < answers.size(); ++r)
    for (auto a : answers[r]) {
      if (a >= c) throw DimensionError("answer_loss: answer index out of range");
      v[r * c + a] = T(1);
    }
  return ops::sigmoid_bce(tape, logits, multi_hot);
}

template <typename T>
nn::NamedTensors<T> RamenModel<T>::parameters() const {
  nn::NamedTensors<T> out;
  embedding_.collect("embedding", out);
  question_gru_.collect("question_gru", out);
  input_bn_.collect("input_bn", out);
  projector_.collect("projector", out);
  if (aggregator_fwd_) aggregator_fwd_->collect("aggregator.fwd", out);
  if (aggregator_bwd_) aggregator_bwd_->collect("aggregator.bwd", out);
  pre_classifier_.collect("pre_classifier", out);
  classifier_.collect("classifier", out);
  return out;
}

template <typename T>
nn::NamedTensors<T> RamenModel<T>::buffers() const {
  nn::NamedTensors<T> out;
  input_bn_.collect_buffers("input_bn", out);
  return out;
}

template <typename T>
std::size_t RamenModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

std::size_t parameter_count(const RamenConfig& c) {
  c.validate();
  auto linear = [](std::size_t in, std::size_t out) { return out * in + out; };
  auto gru = [](std::size_t in, std::size_t h) { return 3 * (h * in + h * h + h); };
  std::size_t n = c.vocab_size * c.embedding_dim;
  n += gru(c.embedding_dim, c.question_dim);
  n += 2 * c.projector_input();
  n += linear(c.projector_input(), c.projector_width) + 3 * linear(c.projector_width, c.projector_width);
  if (c.ablation != Ablation::mean_pool) n += 2 * gru(c.late_fused_dim(), c.aggregator_hidden);
  n += linear(c.aggregate_dim(), c.pre_classifier_width);
  n += linear(c.pre_classifier_width, c.num_answers);
  return n;
}

template <typename T>
std::vector<std::size_t> predict(const Tensor<T>& logits) {
  const std::size_t rows = logits.rank() == 1 ? 1 : logits.rows();
  const std::size_t cols = logits.rank() == 1 ? logits.numel() : logits.cols();
  auto v = logits.values();
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j)
      if (v[r * cols + j] > v[r * cols + best]) best = j;
    out[r] = best;
  }
  return out;
}

template class RamenModel<float>;
template class RamenModel<double>;
template std::vector<std::size_t> predict(const Tensor<float>&);
template std::vector<std::size_t> predict(const Tensor<double>&);

}  // namespace ramen
