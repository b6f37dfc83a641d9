// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container: magic, format version, scalar width, a JSON
// header (configs, tensor index, optimizer and progress state) and the raw
// tensor payload. Values round-trip exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ramen/model.hpp"
#include "ramen/train.hpp"

namespace ramen::train {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  RamenConfig config;
  std::vector<std::string> answers;
  TrainerConfig trainer;
  Schedule schedule;
  std::vector<std::string> param_names;
  std::vector<std::string> buffer_names;
  Snapshot<T> model;
  TrainProgress<T> progress;
};

template <typename T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::filesystem::path& path);

/// Throws CheckpointError on a bad magic number, version or scalar width,
/// truncated or trailing data, or a payload checksum mismatch.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// Scalar width (4 or 8 bytes) recorded in a checkpoint file.
std::size_t checkpoint_scalar_size(const std::filesystem::path& path);

/// Throws CheckpointError listing the differing fields when the configs differ.
void require_same_config(const RamenConfig& expected, const RamenConfig& found);

}  // namespace ramen::train
