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

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "deepunet/train.hpp"

namespace deepunet {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

constexpr const char* kParamPrefix = "param/";
constexpr const char* kVelocityPrefix = "velocity/";

json to_json(const ModelConfig& m) {
  return {{"depth", m.depth},
          {"wide_channels", m.wide_channels},
          {"narrow_channels", m.narrow_channels},
          {"input_channels", m.input_channels},
          {"num_classes", m.num_classes},
          {"plus_enabled", m.plus_enabled}};
}

json to_json(const TrainConfig& c) {
  return {{"total_steps", c.total_steps},
          {"batch_size", c.batch_size},
          {"tile_size", c.tile_size},
          {"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every},
          {"samples_per_image", c.samples_per_image},
          {"val_tiles", c.val_tiles},
          {"min_fraction", c.min_fraction},
          {"augment",
           {{"flips", c.augment.flips},
            {"rotations", c.augment.rotations},
            {"min_scale", c.augment.min_scale},
            {"max_scale", c.augment.max_scale}}}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig m;
  m.depth = j.at("depth").get<int>();
  m.wide_channels = j.at("wide_channels").get<int>();
  m.narrow_channels = j.at("narrow_channels").get<int>();
  m.input_channels = j.at("input_channels").get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  m.plus_enabled = j.at("plus_enabled").get<bool>();
  return m;
}

TrainConfig train_config_from(const json& j) {
  TrainConfig c;
  c.total_steps = j.at("total_steps").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.tile_size = j.at("tile_size").get<int>();
  c.base_lr = j.at("base_lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.samples_per_image = j.at("samples_per_image").get<int>();
  c.val_tiles = j.at("val_tiles").get<int>();
  c.min_fraction = j.at("min_fraction").get<double>();
  const auto& a = j.at("augment");
  c.augment.flips = a.at("flips").get<bool>();
  c.augment.rotations = a.at("rotations").get<bool>();
  c.augment.min_scale = a.at("min_scale").get<double>();
  c.augment.max_scale = a.at("max_scale").get<double>();
  return c;
}

template <typename U>
void put(std::ostream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

class Reader {
 public:
  Reader(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  template <typename U>
  U get(const char* what) {
    U value{};
    bytes(reinterpret_cast<char*>(&value), sizeof(U), what);
    return value;
  }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw std::runtime_error(path_.string() + ": truncated while reading " + what + " at byte " +
                               std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
    }
    offset_ += n;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  const std::filesystem::path& path_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const std::string& metadata,
                       std::span<const NamedTensor<float>> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long: " + t.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const Shape s = t.tensor.shape();
    put<std::uint8_t>(out, 4);
    for (std::size_t e : {s.n, s.c, s.h, s.w}) put<std::uint64_t>(out, e);
    const auto d = t.tensor.data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(float)));
  }
  out.flush();
  if (!out) throw std::runtime_error("error writing " + path.string());
}

std::pair<std::string, std::vector<NamedTensor<float>>> read_tensor_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Reader r(in, path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error(path.string() + ": bad magic, not a DUNW file");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path.string() + ": unsupported format version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  const auto meta_len = r.get<std::uint32_t>("metadata length");
  std::string meta(meta_len, '\0');
  r.bytes(meta.data(), meta_len, "metadata");

  std::vector<NamedTensor<float>> tensors;
  while (!r.at_end()) {
    const auto name_len = r.get<std::uint16_t>("record name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "record name");
    const auto rank = r.get<std::uint8_t>("record rank");
    if (rank == 0 || rank > 4) {
      throw std::runtime_error(path.string() + ": record " + name + " has unsupported rank " +
                               std::to_string(rank));
    }
    std::size_t ext[4] = {1, 1, 1, 1};
    for (int i = 0; i < rank; ++i) {
      ext[4 - rank + i] = static_cast<std::size_t>(r.get<std::uint64_t>("record extents"));
    }
    const Shape shape{ext[0], ext[1], ext[2], ext[3]};
    if (shape.numel() > (std::size_t{1} << 34)) {
      throw std::runtime_error(path.string() + ": record " + name + " claims " +
                               std::to_string(shape.numel()) + " elements");
    }
    Tensor t(shape);
    auto d = t.data();
    r.bytes(reinterpret_cast<char*>(d.data()), d.size() * sizeof(float), "record payload");
    tensors.push_back({std::move(name), std::move(t)});
  }
  return {std::move(meta), std::move(tensors)};
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const OptimizerState& state, std::int64_t step, const TrainConfig& config) {
  const json meta = {{"model", to_json(model.config)}, {"train", to_json(config)}, {"step", step}};
  std::vector<NamedTensor<float>> records;
  for (const auto& p : model.parameters()) records.push_back({kParamPrefix + p.name, p.tensor});
  for (const auto& v : state.velocity) records.push_back({kVelocityPrefix + v.name, v.tensor});
  write_tensor_file(path, meta.dump(), records);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto [meta_text, records] = read_tensor_file(path);
  Checkpoint ckpt;
  try {
    const json meta = json::parse(meta_text);
    ckpt.model_config = model_config_from(meta.at("model"));
    ckpt.train_config = train_config_from(meta.at("train"));
    ckpt.step = meta.at("step").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed metadata: " + e.what());
  }
  const std::string pp = kParamPrefix, vp = kVelocityPrefix;
  for (auto& r : records) {
    if (r.name.rfind(pp, 0) == 0) {
      ckpt.params.push_back({r.name.substr(pp.size()), r.tensor});
    } else if (r.name.rfind(vp, 0) == 0) {
      ckpt.velocities.push_back({r.name.substr(vp.size()), r.tensor});
    } else {
      throw std::runtime_error(path.string() + ": unexpected record " + r.name);
    }
  }
  return ckpt;
}

namespace {

void copy_named(const std::vector<NamedTensor<float>>& from,
                const std::vector<NamedTensor<float>>& to, const char* what) {
  std::map<std::string, const Tensor*> src;
  for (const auto& t : from) src[t.name] = &t.tensor;
  std::set<std::string> want;
  for (const auto& t : to) want.insert(t.name);
  for (const auto& t : to) {
    if (!src.contains(t.name)) {
      throw std::invalid_argument(std::string(what) + " name-set mismatch: checkpoint lacks " +
                                  t.name);
    }
  }
  for (const auto& [name, _] : src) {
    if (!want.contains(name)) {
      throw std::invalid_argument(std::string(what) +
                                  " name-set mismatch: checkpoint has unexpected " + name);
    }
  }
  for (const auto& t : to) {
    const Tensor& s = *src.at(t.name);
    if (s.shape() != t.tensor.shape()) {
      throw std::invalid_argument(std::string(what) + " " + t.name + " has shape " +
                                  s.shape().str() + " in checkpoint, model expects " +
                                  t.tensor.shape().str());
    }
    Tensor dst = t.tensor;
    std::copy(s.data().begin(), s.data().end(), dst.data().begin());
  }
}

}  // namespace

void restore(const Checkpoint& ckpt, Model& model, OptimizerState* state) {
  copy_named(ckpt.params, model.parameters(), "parameter");
  if (state != nullptr) {
    if (state->velocity.empty()) *state = OptimizerState::zeros_like(model);
    copy_named(ckpt.velocities, state->velocity, "velocity");
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model = build(ckpt.model_config, 0);
  restore(ckpt, model);
  return model;
}

}  // namespace deepunet
