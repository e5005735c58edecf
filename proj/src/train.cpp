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

#include "deepunet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "deepunet/metrics.hpp"
#include "deepunet/ops.hpp"

namespace deepunet {

TrainConfig TrainConfig::full() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.total_steps = 2000;
  c.batch_size = 8;
  c.tile_size = 64;
  // Without normalization the residual sums put logits near 40 at init;
  // anything from 1e-3 up diverges within ten steps.
  c.base_lr = 3e-4;
  c.eval_every = 250;
  c.checkpoint_every = 500;
  c.samples_per_image = 200;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (total_steps < 1) fail("total_steps must be >= 1, got " + std::to_string(total_steps));
  if (batch_size < 1) fail("batch_size must be >= 1, got " + std::to_string(batch_size));
  if (tile_size < 1) fail("tile_size must be >= 1, got " + std::to_string(tile_size));
  if (!(base_lr > 0)) fail("base_lr must be > 0");
  if (!(momentum >= 0 && momentum < 1)) fail("momentum must lie in [0, 1)");
  if (eval_every < 0 || checkpoint_every < 0) fail("eval_every and checkpoint_every must be >= 0");
  if (samples_per_image < 1) fail("samples_per_image must be >= 1");
  if (val_tiles < 0) fail("val_tiles must be >= 0");
  if (!(min_fraction >= 0 && min_fraction <= 0.5)) fail("min_fraction must lie in [0, 0.5]");
  if (!(augment.min_scale > 0 && augment.min_scale <= augment.max_scale)) {
    fail("augment scales must satisfy 0 < min_scale <= max_scale");
  }
}

double lr_at(int step, const TrainConfig& config) {
  if (step < 0 || step >= config.total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(config.total_steps) + ")");
  }
  const int half = config.total_steps / 2;
  const int three_quarters = 3 * config.total_steps / 4;
  if (step < half) return config.base_lr;
  if (step < three_quarters) return config.base_lr / 10;
  return config.base_lr / 100;
}

OptimizerState OptimizerState::zeros_like(const Model& model) {
  OptimizerState s;
  for (const auto& p : model.parameters()) {
    s.velocity.push_back({p.name, Tensor(p.tensor.shape())});
  }
  return s;
}

void sgd_momentum_step(std::span<const NamedTensor<float>> params, OptimizerState& state,
                       double lr, double momentum) {
  if (params.size() != state.velocity.size()) {
    throw std::invalid_argument("optimizer has " + std::to_string(state.velocity.size()) +
                                " velocity buffers for " + std::to_string(params.size()) +
                                " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].tensor;
    if (state.velocity[i].tensor.shape() != p.shape()) {
      throw std::invalid_argument("velocity shape " + state.velocity[i].tensor.shape().str() +
                                  " does not match parameter " + params[i].name + " " +
                                  p.shape().str());
    }
    if (p.has_grad() && !all_finite<float>(p.grad())) {
      throw std::runtime_error("non-finite gradient in parameter " + params[i].name +
                               "; step aborted");
    }
  }
  const auto mu = static_cast<float>(momentum);
  const auto rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto v = state.velocity[i].tensor.data();
    auto w = p.data();
    if (p.has_grad()) {
      const auto g = p.grad();
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = mu * v[k] - rate * g[k];
        w[k] += v[k];
      }
    } else {
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = mu * v[k];
        w[k] += v[k];
      }
    }
  }
}

std::pair<Tensor, std::vector<std::uint8_t>> stack_batch(std::span<const TileSample> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Shape first = batch[0].tile.shape();
  if (first.n != 1 || first.c != 3 || first.h == 0 || first.w == 0) {
    throw std::invalid_argument("tile shape " + first.str() + " is not (1, 3, H, W)");
  }
  Tensor x(Shape{batch.size(), 3, first.h, first.w});
  std::vector<std::uint8_t> target;
  target.reserve(batch.size() * first.plane());
  auto d = x.data();
  const std::size_t per = first.numel();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    if (s.tile.shape() != first) {
      throw std::invalid_argument("tile " + std::to_string(b) + " has shape " +
                                  s.tile.shape().str() + ", expected " + first.str());
    }
    if (s.target.size() != first.plane()) {
      throw std::invalid_argument("tile " + std::to_string(b) + " has " +
                                  std::to_string(s.target.size()) + " target pixels, expected " +
                                  std::to_string(first.plane()));
    }
    const auto src = s.tile.data();
    std::copy(src.begin(), src.end(), d.begin() + static_cast<std::ptrdiff_t>(b * per));
    target.insert(target.end(), s.target.begin(), s.target.end());
  }
  return {std::move(x), std::move(target)};
}

namespace {

void check_tile_extent(const Model& model, const Tensor& x) {
  const std::size_t m = model.config.input_multiple();
  if (x.shape().h % m != 0 || x.shape().w % m != 0) {
    throw std::invalid_argument("tile " + std::to_string(x.shape().h) + "x" +
                                std::to_string(x.shape().w) + " is not a multiple of " +
                                std::to_string(m) + " required by depth " +
                                std::to_string(model.config.depth));
  }
}

}  // namespace

float train_step(Model& model, std::span<const TileSample> batch, OptimizerState& state, int step,
                 const TrainConfig& config) {
  auto [x, target] = stack_batch(batch);
  check_tile_extent(model, x);
  const double lr = lr_at(step, config);
  const auto params = model.parameters();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  float loss_value = 0;
  {
    Tape<float> tape;
    const Tensor logits = forward_logits(model, x, &tape);
    const Tensor probs = ops::softmax_channels(logits, &tape);
    const Tensor loss = ops::cross_entropy_loss(probs, target, &tape);
    loss_value = loss.item();
    tape.backward(loss);
  }
  sgd_momentum_step(params, state, lr, config.momentum);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  return loss_value;
}

float batch_loss(const Model& model, std::span<const TileSample> batch) {
  auto [x, target] = stack_batch(batch);
  check_tile_extent(model, x);
  const Tensor probs = forward(model, x);
  return ops::cross_entropy_loss(probs, target).item();
}

// ---------------------------------------------------------------- TileStream

TileStream::TileStream(std::vector<LabeledImage> images, const TrainConfig& config)
    : images_(std::move(images)), config_(config) {
  if (images_.empty()) throw std::invalid_argument("TileStream: no training images");
  config_.validate();
  build_epoch(0);
}

void TileStream::build_epoch(std::size_t epoch) {
  tiles_ = build_training_set(images_, static_cast<std::size_t>(config_.tile_size),
                              static_cast<std::size_t>(config_.samples_per_image), config_.augment,
                              derive_rng(config_.seed, 0xE90C4ULL, epoch)(), config_.min_fraction,
                              &stats_);
  if (tiles_.empty()) {
    throw std::runtime_error("no tile with both classes could be cropped from the training set");
  }
  epoch_ = epoch;
}

std::vector<TileSample> TileStream::batch(int step) {
  if (step < 0) throw std::invalid_argument("TileStream: negative step");
  // Epochs have a nominal size so that the owner of any global tile index
  // is known without building earlier epochs.
  const std::size_t nominal = images_.size() * static_cast<std::size_t>(config_.samples_per_image);
  const std::size_t bsz = static_cast<std::size_t>(config_.batch_size);
  std::vector<TileSample> out;
  out.reserve(bsz);
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::size_t j = static_cast<std::size_t>(step) * bsz + b;
    const std::size_t epoch = j / nominal;
    if (epoch != epoch_) build_epoch(epoch);
    out.push_back(tiles_[(j % nominal) % tiles_.size()]);
  }
  return out;
}

// ---------------------------------------------------------------- loop

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Land F1 of per-pixel argmax over a fixed set of held-out tiles.
std::optional<double> validation_f1(const Model& model, const std::vector<TileSample>& tiles,
                                    std::size_t batch) {
  if (tiles.empty()) return std::nullopt;
  ConfusionCounts total;
  for (std::size_t start = 0; start < tiles.size(); start += batch) {
    const std::size_t end = std::min(tiles.size(), start + batch);
    auto [x, target] = stack_batch(std::span(tiles).subspan(start, end - start));
    const Tensor probs = forward(model, x);
    const std::size_t plane = x.shape().plane();
    const auto p = probs.data();
    std::vector<std::uint8_t> pred(target.size()), gt(target.size());
    for (std::size_t b = 0; b < end - start; ++b) {
      for (std::size_t i = 0; i < plane; ++i) {
        const float land = p[(2 * b) * plane + i], sea = p[(2 * b + 1) * plane + i];
        pred[b * plane + i] = sea > land ? kSea : kLand;
        gt[b * plane + i] = target[b * plane + i] == kSeaClass ? kSea : kLand;
      }
    }
    total += confusion(pred, gt);
  }
  const auto pr = land_precision_recall(total);
  return f1(pr.precision, pr.recall);
}

std::vector<TileSample> validation_tiles(const DatasetManifest& manifest, const TrainConfig& config) {
  const auto images = load_manifest_images(manifest);
  std::vector<TileSample> tiles;
  const std::size_t want = static_cast<std::size_t>(config.val_tiles);
  if (want == 0) return tiles;
  const auto tile = static_cast<std::size_t>(config.tile_size);
  for (std::size_t i = 0; tiles.size() < want && i < want * 4; ++i) {
    const std::size_t idx = i % images.size();
    if (images[idx].rgb.height < tile || images[idx].rgb.width < tile) continue;
    Rng rng = derive_rng(config.seed, 0x7A11ULL, i);
    if (auto s = crop_both_classes(images[idx], tile, config.min_fraction, rng, 100, idx)) {
      tiles.push_back(std::move(*s));
    }
  }
  return tiles;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06lld.dunw", static_cast<long long>(step));
  return dir / buf;
}

std::vector<std::string> log_header(const ModelConfig& m, const TrainConfig& c,
                                    const DatasetManifest& manifest) {
  std::vector<std::string> h;
  h.push_back("# model: depth=" + std::to_string(m.depth) + " wide=" +
              std::to_string(m.wide_channels) + " narrow=" + std::to_string(m.narrow_channels) +
              " plus=" + (m.plus_enabled ? "on" : "off"));
  h.push_back("# train: tile=" + std::to_string(c.tile_size) + " batch=" +
              std::to_string(c.batch_size) + " steps=" + std::to_string(c.total_steps) +
              " lr=" + format_double(c.base_lr) + " momentum=" + format_double(c.momentum) +
              " seed=" + std::to_string(c.seed));
  h.push_back("# data: images=" + std::to_string(manifest.entries.size()) + " samples_per_image=" +
              std::to_string(c.samples_per_image) + " min_fraction=" +
              format_double(c.min_fraction));
  h.push_back("step\tlr\tloss\tval_F1");
  return h;
}

// Keeps header lines and records for steps before `step`.
void truncate_log(const std::filesystem::path& path, std::int64_t step) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics log " + path.string());
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step\t", 0) == 0) {
      keep.push_back(line);
      continue;
    }
    if (std::stoll(line.substr(0, line.find('\t'))) < step) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << "\n";
  if (!out) throw std::runtime_error("cannot rewrite metrics log " + path.string());
}

}  // namespace

TrainLoopResult train_loop(const ModelConfig& model_config, const TrainConfig& config,
                           const DatasetManifest& manifest, const TrainLoopOptions& options) {
  config.validate();
  model_config.validate();
  if (static_cast<std::size_t>(config.tile_size) % model_config.input_multiple() != 0) {
    throw std::invalid_argument("tile " + std::to_string(config.tile_size) +
                                " is not a multiple of " +
                                std::to_string(model_config.input_multiple()) +
                                " required by depth " + std::to_string(model_config.depth));
  }
  std::filesystem::create_directories(options.out_dir);

  Model model = build(model_config, config.seed);
  OptimizerState state = OptimizerState::zeros_like(model);
  std::int64_t start = 0;
  TrainLoopResult result;
  result.log_path = options.out_dir / "metrics.tsv";

  if (options.resume) {
    const Checkpoint ckpt = load_checkpoint(*options.resume);
    if (!(ckpt.model_config == model_config)) {
      throw std::invalid_argument("checkpoint " + options.resume->string() +
                                  " was trained with a different model configuration");
    }
    restore(ckpt, model, &state);
    start = ckpt.step;
    if (std::filesystem::exists(result.log_path)) {
      truncate_log(result.log_path, start);
    }
  }
  if (start == 0 || !std::filesystem::exists(result.log_path)) {
    std::ofstream log(result.log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot create metrics log " + result.log_path.string());
    for (const auto& l : log_header(model_config, config, manifest)) log << l << "\n";
  }
  std::ofstream log(result.log_path, std::ios::app);
  if (!log) throw std::runtime_error("cannot open metrics log " + result.log_path.string());

  TileStream stream(load_manifest_images(manifest), config);
  std::vector<TileSample> val;
  if (options.validation) val = validation_tiles(*options.validation, config);

  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t step = start;
  int ran = 0;
  float loss = 0;
  while (step < config.total_steps) {
    if (options.max_steps_this_run > 0 && ran >= options.max_steps_this_run) break;
    const auto batch = stream.batch(static_cast<int>(step));
    const double lr = lr_at(static_cast<int>(step), config);
    loss = train_step(model, batch, state, static_cast<int>(step), config);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("loss became non-finite at step " + std::to_string(step));
    }
    ++step;
    ++ran;
    std::optional<double> vf1;
    const bool eval_now = !val.empty() && config.eval_every > 0 &&
                          (step % config.eval_every == 0 || step == config.total_steps);
    if (eval_now) {
      vf1 = validation_f1(model, val, static_cast<std::size_t>(config.batch_size));
    }
    log << (step - 1) << "\t" << format_double(lr) << "\t" << format_double(loss) << "\t"
        << (vf1 ? format_double(*vf1) : "null") << "\n";
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
      save_checkpoint(checkpoint_path(options.out_dir, step), model, state, step, config);
    }
    if (!options.quiet && (step % 50 == 0 || vf1 || step == config.total_steps)) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "step " << step << "/" << config.total_steps << " lr " << format_double(lr)
                << " loss " << format_double(loss);
      if (vf1) std::cerr << " val_F1 " << format_double(*vf1);
      std::cerr << " (" << static_cast<long long>(secs) << "s)\n";
    }
  }
  log.flush();
  if (!log) throw std::runtime_error("error writing metrics log " + result.log_path.string());

  result.final_step = step;
  result.final_loss = loss;
  result.final_checkpoint =
      step == config.total_steps ? options.out_dir / "final.dunw" : checkpoint_path(options.out_dir, step);
  save_checkpoint(result.final_checkpoint, model, state, step, config);
  return result;
}

}  // namespace deepunet
