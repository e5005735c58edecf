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

#include "deepunet/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "deepunet/ops.hpp"

namespace deepunet {

void ModelConfig::validate() const {
  if (depth < 1 || depth > 12) {
    throw std::invalid_argument("model depth must be in [1, 12], got " + std::to_string(depth));
  }
  if (narrow_channels < 1 || wide_channels < narrow_channels) {
    throw std::invalid_argument("need wide_channels >= narrow_channels >= 1, got wide " +
                                std::to_string(wide_channels) + ", narrow " +
                                std::to_string(narrow_channels));
  }
  if (input_channels < 1) throw std::invalid_argument("input_channels must be positive");
  if (num_classes != 2) {
    throw std::invalid_argument("only two-class heads are supported, got " +
                                std::to_string(num_classes));
  }
}

namespace {

ConvParams<float> make_conv(int in, int out, int kernel, std::mt19937_64& rng) {
  ConvParams<float> p;
  const auto k = static_cast<std::size_t>(kernel);
  p.weight = Tensor(Shape{static_cast<std::size_t>(out), static_cast<std::size_t>(in), k, k});
  p.bias = Tensor(Shape{static_cast<std::size_t>(out), 1, 1, 1});
  p.padding = k / 2;
  const double fan_in = static_cast<double>(in) * kernel * kernel;
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
  for (float& v : p.weight.data()) v = dist(rng);
  p.weight.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

template <typename T>
BasicTensor<T> conv(const BasicTensor<T>& x, const ConvParams<T>& p, Tape<T>* tape) {
  return ops::conv2d(x, p.weight, p.bias, 1, p.padding, tape);
}

template <typename U, typename T>
ConvParams<U> cast_conv(const ConvParams<T>& p) {
  ConvParams<U> out;
  out.weight = p.weight.template cast<U>();
  out.bias = p.bias.template cast<U>();
  out.weight.set_requires_grad(p.weight.requires_grad());
  out.bias.set_requires_grad(p.bias.requires_grad());
  out.padding = p.padding;
  return out;
}

}  // namespace

Model build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const int wide = config.wide_channels, narrow = config.narrow_channels;
  Model m;
  m.config = config;
  m.stem.push_back(make_conv(config.input_channels, wide, 3, rng));
  m.stem.push_back(make_conv(wide, wide, 3, rng));
  m.stem.push_back(make_conv(wide, narrow, 3, rng));
  for (int i = 0; i + 1 < config.depth; ++i) {
    BlockParams<float> b;
    b.conv1 = make_conv(narrow, wide, 3, rng);
    b.conv2 = make_conv(wide, narrow, 3, rng);
    m.down.push_back(std::move(b));
  }
  for (int i = 0; i < config.depth; ++i) {
    BlockParams<float> b;
    b.conv1 = make_conv(2 * narrow, wide, 3, rng);
    b.conv2 = make_conv(wide, narrow, 3, rng);
    m.up.push_back(std::move(b));
  }
  m.head = make_conv(narrow, config.num_classes, 1, rng);
  return m;
}

template <typename T>
std::vector<NamedTensor<T>> BasicModel<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  auto push = [&out](const std::string& prefix, const ConvParams<T>& p) {
    out.push_back({prefix + ".weight", p.weight});
    out.push_back({prefix + ".bias", p.bias});
  };
  for (std::size_t i = 0; i < stem.size(); ++i) push("stem.conv" + std::to_string(i), stem[i]);
  for (std::size_t i = 0; i < down.size(); ++i) {
    push("down" + std::to_string(i + 1) + ".conv1", down[i].conv1);
    push("down" + std::to_string(i + 1) + ".conv2", down[i].conv2);
  }
  for (std::size_t i = 0; i < up.size(); ++i) {
    push("up" + std::to_string(i + 1) + ".conv1", up[i].conv1);
    push("up" + std::to_string(i + 1) + ".conv2", up[i].conv2);
  }
  push("head", head);
  return out;
}

template <typename T>
template <typename U>
BasicModel<U> BasicModel<T>::cast() const {
  BasicModel<U> m;
  m.config = config;
  for (const auto& p : stem) m.stem.push_back(cast_conv<U>(p));
  for (const auto& b : down) m.down.push_back({cast_conv<U>(b.conv1), cast_conv<U>(b.conv2)});
  for (const auto& b : up) m.up.push_back({cast_conv<U>(b.conv1), cast_conv<U>(b.conv2)});
  m.head = cast_conv<U>(head);
  return m;
}

template <typename T>
DownOutput<T> down_block_forward(const BasicTensor<T>& x, const BlockParams<T>& params,
                                 bool plus_enabled, Tape<T>* tape) {
  if (x.shape().c != params.conv1.weight.shape().c) {
    throw std::invalid_argument("DownBlock: input " + x.shape().str() + " but block expects " +
                                std::to_string(params.conv1.weight.shape().c) + " channels");
  }
  auto h = conv(ops::relu(conv(x, params.conv1, tape), tape), params.conv2, tape);
  auto y = plus_enabled ? ops::add(h, x, tape) : h;
  auto pooled = ops::maxpool2x2(y, tape);
  return {pooled.output, y};
}

template <typename T>
BasicTensor<T> up_block_forward(const BasicTensor<T>& prev, const BasicTensor<T>& skip,
                                const BlockParams<T>& params, bool plus_enabled, Tape<T>* tape) {
  const Shape ps = prev.shape(), ss = skip.shape();
  if (ss.n != ps.n || ss.h != 2 * ps.h || ss.w != 2 * ps.w) {
    throw std::invalid_argument("UpBlock: skip " + ss.str() + " is not twice the size of " +
                                ps.str());
  }
  auto u = ops::upsample_nearest2x(prev, tape);
  const BasicTensor<T> parts[] = {u, skip};
  auto cat = ops::concat_channels<T>(parts, tape);
  auto h = conv(ops::relu(conv(cat, params.conv1, tape), tape), params.conv2, tape);
  return plus_enabled ? ops::add(h, u, tape) : h;
}

template <typename T>
BasicTensor<T> forward_logits(const BasicModel<T>& model, const BasicTensor<T>& image,
                              Tape<T>* tape, ForwardTrace<T>* trace) {
  const ModelConfig& cfg = model.config;
  const Shape s = image.shape();
  if (s.c != static_cast<std::size_t>(cfg.input_channels)) {
    throw std::invalid_argument("forward: image " + s.str() + " should have " +
                                std::to_string(cfg.input_channels) + " channels");
  }
  const std::size_t multiple = cfg.input_multiple();
  if (s.h == 0 || s.w == 0 || s.h % multiple != 0 || s.w % multiple != 0) {
    throw std::invalid_argument("forward: image extents " + std::to_string(s.h) + "x" +
                                std::to_string(s.w) + " must be multiples of " +
                                std::to_string(multiple) + " (2^depth, depth " +
                                std::to_string(cfg.depth) + ")");
  }

  auto x = ops::relu(conv(image, model.stem[0], tape), tape);
  x = ops::relu(conv(x, model.stem[1], tape), tape);
  x = conv(x, model.stem[2], tape);

  std::vector<BasicTensor<T>> skips{x};
  auto pooled = ops::maxpool2x2(x, tape).output;
  if (trace != nullptr) {
    trace->skips.push_back(x);
    trace->pooled.push_back(pooled.shape());
  }
  for (const auto& block : model.down) {
    if (trace != nullptr) trace->down_inputs.push_back(pooled);
    auto r = down_block_forward(pooled, block, cfg.plus_enabled, tape);
    skips.push_back(r.skip);
    pooled = r.pooled;
    if (trace != nullptr) {
      trace->skips.push_back(r.skip);
      trace->pooled.push_back(pooled.shape());
    }
  }
  if (trace != nullptr) trace->innermost = pooled;

  auto h = pooled;
  for (std::size_t i = 0; i < model.up.size(); ++i) {
    h = up_block_forward(h, skips[skips.size() - 1 - i], model.up[i], cfg.plus_enabled, tape);
    if (trace != nullptr) trace->upsampled.push_back(h.shape());
  }
  return ops::conv2d(h, model.head.weight, model.head.bias, 1, 0, tape);
}

template <typename T>
BasicTensor<T> forward(const BasicModel<T>& model, const BasicTensor<T>& image, Tape<T>* tape,
                       ForwardTrace<T>* trace) {
  return ops::softmax_channels(forward_logits(model, image, tape, trace), tape);
}

std::size_t parameter_count(const ModelConfig& config) {
  config.validate();
  const std::size_t in = static_cast<std::size_t>(config.input_channels);
  const std::size_t wide = static_cast<std::size_t>(config.wide_channels);
  const std::size_t narrow = static_cast<std::size_t>(config.narrow_channels);
  const std::size_t classes = static_cast<std::size_t>(config.num_classes);
  const std::size_t depth = static_cast<std::size_t>(config.depth);
  auto conv3 = [](std::size_t i, std::size_t o) { return 9 * i * o + o; };
  const std::size_t stem = conv3(in, wide) + conv3(wide, wide) + conv3(wide, narrow);
  const std::size_t down_block = conv3(narrow, wide) + conv3(wide, narrow);
  const std::size_t up_block = conv3(2 * narrow, wide) + conv3(wide, narrow);
  return stem + (depth - 1) * down_block + depth * up_block + narrow * classes + classes;
}

std::vector<LayerSpec> layer_table(const ModelConfig& config) {
  config.validate();
  const int wide = config.wide_channels, narrow = config.narrow_channels;
  std::vector<LayerSpec> t;
  t.push_back({"conv0_0", LayerKind::Conv, 3, wide, "down"});
  t.push_back({"conv0_1", LayerKind::Conv, 3, wide, "down"});
  t.push_back({"conv0_2", LayerKind::Conv, 3, narrow, "down"});
  t.push_back({"Pooling0", LayerKind::Pool, 2, 0, "down"});
  for (int s = 1; s < config.depth; ++s) {
    const std::string id = std::to_string(s);
    t.push_back({"conv" + id + "_1", LayerKind::Conv, 3, wide, "down"});
    t.push_back({"conv" + id + "_2", LayerKind::Conv, 3, narrow, "down"});
    t.push_back({"Pooling" + id, LayerKind::Pool, 2, 0, "down"});
  }
  for (int s = config.depth + 1; s <= 2 * config.depth; ++s) {
    const std::string id = std::to_string(s);
    t.push_back({"Upsample" + id, LayerKind::Upsample, 2, 0, "up"});
    t.push_back({"conv" + id + "_1", LayerKind::Conv, 3, wide, "up"});
    t.push_back({"conv" + id + "_2", LayerKind::Conv, 3, narrow, "up"});
  }
  t.push_back({"head", LayerKind::Conv, 1, config.num_classes, "up"});
  return t;
}

double receptive_field(const std::vector<LayerSpec>& layers) {
  double r = 1, jump = 1;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        r += (l.kernel - 1) * jump;
        break;
      case LayerKind::Pool:
        r += (l.kernel - 1) * jump;
        jump *= l.kernel;
        break;
      case LayerKind::Upsample:
        jump /= l.kernel;
        break;
    }
  }
  return r;
}

double receptive_field(const ModelConfig& config) { return receptive_field(layer_table(config)); }

#define DEEPUNET_INSTANTIATE_MODEL(T)                                                          \
  template struct BasicModel<T>;                                                              \
  template DownOutput<T> down_block_forward<T>(const BasicTensor<T>&, const BlockParams<T>&,  \
                                               bool, Tape<T>*);                               \
  template BasicTensor<T> up_block_forward<T>(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                              const BlockParams<T>&, bool, Tape<T>*);         \
  template BasicTensor<T> forward_logits<T>(const BasicModel<T>&, const BasicTensor<T>&,      \
                                            Tape<T>*, ForwardTrace<T>*);                      \
  template BasicTensor<T> forward<T>(const BasicModel<T>&, const BasicTensor<T>&, Tape<T>*,   \
                                     ForwardTrace<T>*);

DEEPUNET_INSTANTIATE_MODEL(float)
DEEPUNET_INSTANTIATE_MODEL(double)
template BasicModel<double> BasicModel<float>::cast<double>() const;
template BasicModel<float> BasicModel<float>::cast<float>() const;
template BasicModel<float> BasicModel<double>::cast<float>() const;
template BasicModel<double> BasicModel<double>::cast<double>() const;

}  // namespace deepunet
