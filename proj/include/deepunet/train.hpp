// Copyright 2026 deepunet contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepunet/data.hpp"
#include "deepunet/model.hpp"

namespace deepunet {

struct TrainConfig {
  int total_steps = 10000;
  int batch_size = 11;
  int tile_size = 640;
  double base_lr = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  int eval_every = 500;
  int checkpoint_every = 1000;
  int samples_per_image = 200;
  int val_tiles = 32;
  double min_fraction = kDefaultMinFraction;
  AugmentSpec augment;

  /// Full-size recipe: 640 px tiles, batch 11, 10000 steps, lr 0.1, momentum 0.9.
  static TrainConfig full();
  /// Laptop recipe: 64 px tiles, batch 8, 2000 steps, lr 3e-4 (pair with depth 4).
  static TrainConfig desk();

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Step schedule: base_lr, then base_lr/10 from total/2, base_lr/100 from 3*total/4.
double lr_at(int step, const TrainConfig& config);

/// One velocity buffer per parameter, mirroring its shape.
struct OptimizerState {
  std::vector<NamedTensor<float>> velocity;

  static OptimizerState zeros_like(const Model& model);
};

/// v <- momentum * v - lr * g;  p <- p + v.
///
/// Gradients are read from the parameters' grad buffers (missing = zero).
/// Throws, before touching any parameter, if a gradient is not finite.
void sgd_momentum_step(std::span<const NamedTensor<float>> params, OptimizerState& state,
                       double lr, double momentum);

/// Stacks tiles into a (B, 3, T, T) batch and the matching target ids.
std::pair<Tensor, std::vector<std::uint8_t>> stack_batch(std::span<const TileSample> batch);

/// Forward, fused softmax cross-entropy, backward, momentum update at
/// lr_at(step); gradients are zeroed afterwards. Returns the batch loss.
float train_step(Model& model, std::span<const TileSample> batch, OptimizerState& state, int step,
                 const TrainConfig& config);

/// Loss of `model` on a batch without updating anything.
float batch_loss(const Model& model, std::span<const TileSample> batch);

/// Deterministic tile supply: the batch for step k depends only on
/// (seed, k), so a resumed run sees the same data as an uninterrupted one.
class TileStream {
 public:
  TileStream(std::vector<LabeledImage> images, const TrainConfig& config);

  std::vector<TileSample> batch(int step);
  std::size_t epochs_built() const { return epoch_ + 1; }
  const TrainingSetStats& last_stats() const { return stats_; }

 private:
  void build_epoch(std::size_t epoch);

  std::vector<LabeledImage> images_;
  TrainConfig config_;
  std::size_t epoch_ = 0;
  std::size_t epoch_start_ = 0;  // global tile index of epoch_'s first tile
  std::vector<TileSample> tiles_;
  TrainingSetStats stats_;
};

// ---------------------------------------------------------------- checkpoints

inline constexpr char kCheckpointMagic[4] = {'D', 'U', 'N', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::int64_t step = 0;
  std::vector<NamedTensor<float>> params;
  std::vector<NamedTensor<float>> velocities;
};

/// Little-endian layout: "DUNW" | u32 version | u32 metadata length |
/// metadata (UTF-8 JSON) | records of (u16 name length, name, u8 rank,
/// rank x u64 extents, float32 payload).
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const OptimizerState& state, std::int64_t step, const TrainConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters (and velocities when `state` is given) into a model
/// built from the checkpoint's config. Throws on any name or shape mismatch.
void restore(const Checkpoint& ckpt, Model& model, OptimizerState* state = nullptr);

/// Builds a model from the checkpoint's config and loads its parameters.
Model model_from_checkpoint(const Checkpoint& ckpt);

/// Writes named float tensors with the checkpoint framing (used for
/// probability dumps). `metadata` must be a JSON object text.
void write_tensor_file(const std::filesystem::path& path, const std::string& metadata,
                       std::span<const NamedTensor<float>> tensors);
std::pair<std::string, std::vector<NamedTensor<float>>> read_tensor_file(
    const std::filesystem::path& path);

// ---------------------------------------------------------------- loop

struct TrainLoopOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  std::optional<DatasetManifest> validation;  // held-out images for val_F1
  bool quiet = false;
  /// Stop after this many steps of this invocation (for testing resumption); 0 = no limit.
  int max_steps_this_run = 0;
};

struct TrainLoopResult {
  std::int64_t final_step = 0;
  float final_loss = 0;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
};

/// Trains from scratch (or from options.resume) to config.total_steps,
/// appending `step<TAB>lr<TAB>loss<TAB>val_F1` lines to out_dir/metrics.tsv
/// and writing checkpoints to out_dir.
TrainLoopResult train_loop(const ModelConfig& model_config, const TrainConfig& config,
                           const DatasetManifest& manifest, const TrainLoopOptions& options);

}  // namespace deepunet
