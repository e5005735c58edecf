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

#include "deepunet/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "deepunet/gradcheck.hpp"
#include "deepunet/metrics.hpp"
#include "deepunet/tiling.hpp"
#include "deepunet/train.hpp"

namespace deepunet {

namespace {

namespace fs = std::filesystem;

constexpr double kClaimedReceptiveField = 4220;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Resolved-configuration header printed by every subcommand.
void echo_config(std::ostream& err, const std::string& command,
                 const std::vector<std::pair<std::string, std::string>>& kv) {
  err << "# deepunet " << command;
  for (const auto& [k, v] : kv) err << " " << k << "=" << v;
  err << "\n";
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  fs::path out;
  int count = 40;
  std::string size = "256x256";
  std::uint64_t seed = 1;
  int holdout = 0;
};

// "HxW" or a single number for square images.
std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    std::size_t used = 0;
    const auto h = std::stoul(text.substr(0, x), &used);
    if (used != (x == std::string::npos ? text.size() : x)) throw std::invalid_argument(text);
    if (x == std::string::npos) return {h, h};
    const auto w = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
    return {h, w};
  } catch (const std::logic_error&) {
    throw UsageError("--size expects HxW or N, got '" + text + "'");
  }
}

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  if (a.count < 1) throw UsageError("--count must be >= 1");
  const auto [height, width] = parse_size(a.size);
  if (height < 64 || width < 64) throw UsageError("--size must be at least 64x64");
  if (a.holdout < 0 || a.holdout >= a.count) {
    throw UsageError("--holdout must lie in [0, count)");
  }
  echo_config(err, "synth",
              {{"out", a.out.string()},
               {"count", std::to_string(a.count)},
               {"size", std::to_string(height) + "x" + std::to_string(width)},
               {"seed", std::to_string(a.seed)},
               {"holdout", std::to_string(a.holdout)}});
  fs::create_directories(a.out / "images");
  fs::create_directories(a.out / "masks");
  const SynthParams params;
  std::vector<ManifestEntry> entries(static_cast<std::size_t>(a.count));
  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < a.count; ++i) {
    try {
      char name[32];
      std::snprintf(name, sizeof(name), "synth_%04d.png", i);
      const std::uint64_t s = derive_rng(a.seed, static_cast<std::uint64_t>(i), 0x5E7ULL)();
      const LabeledImage img = synth_generate(s, height, width, params);
      const fs::path image = fs::path("images") / name, mask = fs::path("masks") / name;
      write_png(a.out / image, img.rgb);
      write_png(a.out / mask, img.mask);
      entries[static_cast<std::size_t>(i)] = {image, mask};
    } catch (const std::exception& e) {
#pragma omp critical
      failure = e.what();
    }
  }
  if (!failure.empty()) throw std::runtime_error(failure);

  auto write_manifest = [&](const std::string& file, const std::string& split, std::size_t begin,
                            std::size_t end) {
    DatasetManifest m;
    m.split = split;
    m.comments.push_back("seed: " + std::to_string(a.seed));
    m.comments.push_back("size: " + std::to_string(height) + "x" + std::to_string(width));
    for (const auto& d : params.describe()) m.comments.push_back(d);
    m.entries.assign(entries.begin() + static_cast<std::ptrdiff_t>(begin),
                     entries.begin() + static_cast<std::ptrdiff_t>(end));
    m.write(a.out / file);
  };
  const auto n = static_cast<std::size_t>(a.count);
  write_manifest("manifest.tsv", "all", 0, n);
  if (a.holdout > 0) {
    const std::size_t k = n - static_cast<std::size_t>(a.holdout);
    write_manifest("train.tsv", "train", 0, k);
    write_manifest("val.tsv", "val", k, n);
  }
  out << "wrote " << a.count << " image/mask pairs to " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path manifest, out;
  std::optional<fs::path> val, resume;
  bool desk = false;
  bool no_plus = false;
  bool quiet = false;
  std::optional<int> depth, wide, narrow, tile, batch, steps, eval_every, checkpoint_every,
      samples_per_image, val_tiles, max_steps;
  std::optional<double> lr, momentum;
  std::optional<std::uint64_t> seed;
};

std::pair<ModelConfig, TrainConfig> resolve(const TrainArgs& a) {
  ModelConfig m;
  TrainConfig c = a.desk ? TrainConfig::desk() : TrainConfig::full();
  if (a.desk) m.depth = 4;
  if (a.depth) m.depth = *a.depth;
  if (a.wide) m.wide_channels = *a.wide;
  if (a.narrow) m.narrow_channels = *a.narrow;
  m.plus_enabled = !a.no_plus;
  if (a.tile) c.tile_size = *a.tile;
  if (a.batch) c.batch_size = *a.batch;
  if (a.steps) c.total_steps = *a.steps;
  if (a.eval_every) c.eval_every = *a.eval_every;
  if (a.checkpoint_every) c.checkpoint_every = *a.checkpoint_every;
  if (a.samples_per_image) c.samples_per_image = *a.samples_per_image;
  if (a.val_tiles) c.val_tiles = *a.val_tiles;
  if (a.lr) c.base_lr = *a.lr;
  if (a.momentum) c.momentum = *a.momentum;
  if (a.seed) c.seed = *a.seed;
  return {m, c};
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto [m, c] = resolve(a);
  m.validate();
  c.validate();
  echo_config(err, "train",
              {{"manifest", a.manifest.string()},
               {"out", a.out.string()},
               {"depth", std::to_string(m.depth)},
               {"wide", std::to_string(m.wide_channels)},
               {"narrow", std::to_string(m.narrow_channels)},
               {"plus", m.plus_enabled ? "on" : "off"},
               {"tile", std::to_string(c.tile_size)},
               {"batch", std::to_string(c.batch_size)},
               {"steps", std::to_string(c.total_steps)},
               {"lr", num(c.base_lr)},
               {"momentum", num(c.momentum)},
               {"seed", std::to_string(c.seed)},
               {"resume", a.resume ? a.resume->string() : "none"}});
  TrainLoopOptions opts;
  opts.out_dir = a.out;
  opts.resume = a.resume;
  opts.quiet = a.quiet;
  if (a.max_steps) opts.max_steps_this_run = *a.max_steps;
  if (a.val) opts.validation = DatasetManifest::read(*a.val);
  const auto result = train_loop(m, c, DatasetManifest::read(a.manifest), opts);
  out << "step " << result.final_step << " loss " << num(result.final_loss) << "\n"
      << "checkpoint " << result.final_checkpoint.string() << "\n"
      << "log " << result.log_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- predict / evaluate

struct TilingArgs {
  std::optional<std::size_t> tile, stride, batch;
  std::optional<double> sigma;
};

void add_tiling_flags(CLI::App* app, TilingArgs& t) {
  app->add_option("--tile", t.tile, "Tile size (default: the training tile)");
  app->add_option("--stride", t.stride, "Tile stride (default: tile/2)");
  app->add_option("--sigma", t.sigma, "Gaussian blend sigma (default: tile/6)");
  app->add_option("--tile-batch", t.batch, "Tiles per forward pass");
}

TilingOptions tiling_from(const TilingArgs& t, const Checkpoint& ckpt) {
  TilingOptions o;
  o.tile = t.tile.value_or(static_cast<std::size_t>(ckpt.train_config.tile_size));
  if (t.stride) o.stride = *t.stride;
  if (t.sigma) o.sigma = *t.sigma;
  if (t.batch) o.batch = *t.batch;
  return o;
}

Model load_model(const fs::path& path, bool no_plus) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.model_config.plus_enabled == no_plus) {
    throw UsageError(std::string("--no-plus ") + (no_plus ? "given" : "not given") +
                     " but checkpoint " + path.string() + " was trained with plus connections " +
                     (ckpt.model_config.plus_enabled ? "enabled" : "disabled"));
  }
  return model_from_checkpoint(ckpt);
}

std::vector<std::pair<std::string, std::string>> tiling_kv(const TilingOptions& o) {
  return {{"tile", std::to_string(o.tile)},
          {"stride", std::to_string(o.resolved_stride())},
          {"sigma", num(o.resolved_sigma())}};
}

struct PredictArgs {
  fs::path ckpt, image, out;
  std::optional<fs::path> probs;
  bool no_plus = false;
  TilingArgs tiling;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const Model model = load_model(a.ckpt, a.no_plus);
  const TilingOptions opts = tiling_from(a.tiling, ckpt);
  auto kv = tiling_kv(opts);
  kv.insert(kv.begin(), {{"ckpt", a.ckpt.string()},
                         {"image", a.image.string()},
                         {"seed", std::to_string(ckpt.train_config.seed)}});
  echo_config(err, "predict", kv);
  const RgbImage img = read_png_rgb(a.image);
  const Tensor probs = predict_image(model, img, opts);
  const GrayImage mask = binarize(probs);
  write_png(a.out, mask);
  if (a.probs) {
    std::ostringstream meta;
    meta << "{\"image\":\"" << a.image.filename().string() << "\",\"seed\":"
         << ckpt.train_config.seed << ",\"tile\":" << opts.tile
         << ",\"stride\":" << opts.resolved_stride() << ",\"sigma\":" << num(opts.resolved_sigma())
         << "}";
    const std::vector<NamedTensor<float>> t{{"probs", probs}};
    write_tensor_file(*a.probs, meta.str(), t);
  }
  out << "wrote " << a.out.string() << " (seed " << ckpt.train_config.seed << ", sea fraction "
      << num(sea_fraction(mask)) << ")\n";
  return kExitOk;
}

struct EvaluateArgs {
  fs::path ckpt, manifest, out;
  bool no_plus = false;
  TilingArgs tiling;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const Model model = load_model(a.ckpt, a.no_plus);
  const TilingOptions opts = tiling_from(a.tiling, ckpt);
  auto kv = tiling_kv(opts);
  kv.insert(kv.begin(), {{"ckpt", a.ckpt.string()},
                         {"manifest", a.manifest.string()},
                         {"seed", std::to_string(ckpt.train_config.seed)}});
  echo_config(err, "evaluate", kv);
  const EvaluationReport report = evaluate_set(model, DatasetManifest::read(a.manifest), opts);
  std::ofstream f(a.out);
  if (!f) throw std::runtime_error("cannot write report " + a.out.string());
  f << "# ckpt: " << a.ckpt.string() << "\n# seed: " << ckpt.train_config.seed << "\n"
    << report.tsv();
  if (!f) throw std::runtime_error("error writing report " + a.out.string());
  out << report.table();
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck / rf

struct GradcheckArgs {
  int depth = 2, wide = 8, narrow = 4;
  std::size_t size = 16;
  std::uint64_t seed = 0;
  int seeds = 1;
  double tol = 1e-4, h = 1e-3, floor = 1e-6;
  std::size_t max_per_input = 0;
  int refinements = 3;
  bool no_plus = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  echo_config(err, "gradcheck",
              {{"depth", std::to_string(a.depth)},
               {"wide", std::to_string(a.wide)},
               {"narrow", std::to_string(a.narrow)},
               {"size", std::to_string(a.size)},
               {"seed", std::to_string(a.seed)},
               {"seeds", std::to_string(a.seeds)},
               {"step", num(a.h)},
               {"floor", num(a.floor)},
               {"tol", num(a.tol)}});
  ModelGradCheckSpec spec;
  spec.config.depth = a.depth;
  spec.config.wide_channels = a.wide;
  spec.config.narrow_channels = a.narrow;
  spec.config.plus_enabled = !a.no_plus;
  spec.config.validate();
  spec.size = a.size;
  spec.h = a.h;
  spec.tol = a.tol;
  spec.options.max_per_input = a.max_per_input;
  spec.options.floor = a.floor;
  spec.options.refinements = a.refinements;
  double worst = 0;
  bool ok = true;
  for (int i = 0; i < a.seeds; ++i) {
    spec.seed = a.seed + static_cast<std::uint64_t>(i);
    spec.options.seed = spec.seed;
    const auto r = model_grad_check(spec);
    out << "seed " << spec.seed << ": " << r.summary() << "\n";
    worst = std::max(worst, r.max_rel_error);
    ok = ok && r.passed();
  }
  out << (ok ? "PASS" : "FAIL") << " max relative error " << num(worst) << " (tolerance "
      << num(a.tol) << ")\n";
  return ok ? kExitOk : kExitRuntime;
}

struct RfArgs {
  int depth = 7;
  std::size_t tile = 640;
};

int cmd_rf(const RfArgs& a, std::ostream& out, std::ostream& err) {
  echo_config(err, "rf", {{"depth", std::to_string(a.depth)}, {"tile", std::to_string(a.tile)}});
  ModelConfig m;
  m.depth = a.depth;
  m.validate();
  const double rf = receptive_field(m);
  out << "receptive field (depth " << a.depth << "): " << num(rf) << "x" << num(rf) << "\n";
  out << "tile " << a.tile << ": receptive field " << (rf >= static_cast<double>(a.tile) ? "covers" : "is smaller than")
      << " the tile\n";
  if (a.depth == 7) {
    const bool match = std::abs(rf - kClaimedReceptiveField) < 0.5;
    out << "claimed value " << num(kClaimedReceptiveField) << "x" << num(kClaimedReceptiveField)
        << ": " << (match ? "match" : "MISMATCH") << "\n";
  }
  return kExitOk;
}

// CLI11 reads config files for the top-level app only, so a subcommand's
// --config FILE is expanded into ordinary flags before parsing. Keys already
// on the command line win; `key=false` drops a flag.
std::vector<std::string> expand_config(CLI::App& app, const std::vector<std::string>& args) {
  std::size_t sub_at = args.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size() && !sub; ++i) {
    for (CLI::App* c : app.get_subcommands([](CLI::App*) { return true; })) {
      if (c->get_name() == args[i]) {
        sub = c;
        sub_at = i;
        break;
      }
    }
  }
  if (!sub || !sub->get_option_no_throw("--config")) return args;

  std::vector<std::string> rest;
  std::string path;
  std::set<std::string> given;
  for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file name");
      path = args[++i];
      continue;
    }
    if (a.starts_with("--config=")) {
      path = a.substr(9);
      continue;
    }
    if (a.starts_with("--")) given.insert(a.substr(0, a.find('=')));
    rest.push_back(a);
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::vector<std::string> expanded(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1);
  for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_config(in)) {
    const std::string flag = "--" + item.name;
    if (!item.parents.empty() || item.name == "config") {
      throw CLI::ConfigError("unsupported key '" + item.fullname() + "' in " + path);
    }
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt) throw CLI::ConfigError("unknown key '" + item.name + "' in " + path);
    if (given.contains(flag)) continue;
    if (opt->get_expected_min() == 0) {
      const std::string v = item.inputs.empty() ? "true" : item.inputs.front();
      if (CLI::detail::to_flag_value(v) > 0) expanded.push_back(flag);
      continue;
    }
    expanded.push_back(flag);
    expanded.insert(expanded.end(), item.inputs.begin(), item.inputs.end());
  }
  expanded.insert(expanded.end(), rest.begin(), rest.end());
  return expanded;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sea-land segmentation with a residual U-shaped network"};
  app.name("deepunet");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic coastline images and masks");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--count", synth.count, "Number of images");
  s->add_option("--size", synth.size, "Image extent, HxW or N");
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--holdout", synth.holdout, "Images reserved for val.tsv");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", "key=value settings file");
  t->add_option("--manifest", train.manifest, "Training manifest")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--val", train.val, "Held-out manifest for val_F1");
  t->add_flag("--desk", train.desk, "Small preset: depth 4, tile 64, batch 8, 2000 steps, lr 3e-4");
  t->add_option("--depth", train.depth);
  t->add_option("--wide", train.wide, "Channels of the wide convolutions");
  t->add_option("--narrow", train.narrow, "Channels of the narrow convolutions");
  t->add_option("--tile", train.tile);
  t->add_option("--batch", train.batch);
  t->add_option("--steps", train.steps);
  t->add_option("--lr", train.lr, "Initial learning rate");
  t->add_option("--momentum", train.momentum);
  t->add_option("--seed", train.seed);
  t->add_option("--eval-every", train.eval_every);
  t->add_option("--checkpoint-every", train.checkpoint_every);
  t->add_option("--samples-per-image", train.samples_per_image);
  t->add_option("--val-tiles", train.val_tiles);
  t->add_option("--max-steps", train.max_steps, "Stop this invocation after N steps");
  t->add_option("--resume", train.resume, "Checkpoint to resume from");
  t->add_flag("--no-plus", train.no_plus, "Disable plus connections");
  t->add_flag("--quiet", train.quiet);

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Segment one image");
  p->add_option("--config", "key=value settings file");
  p->add_option("--ckpt", predict.ckpt)->required();
  p->add_option("--image", predict.image)->required();
  p->add_option("--out", predict.out, "Output mask PNG")->required();
  p->add_option("--probs", predict.probs, "Also dump probabilities (tensor record file)");
  p->add_flag("--no-plus", predict.no_plus, "Checkpoint has plus connections disabled");
  add_tiling_flags(p, predict.tiling);

  EvaluateArgs evaluate;
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint on a manifest");
  e->add_option("--config", "key=value settings file");
  e->add_option("--ckpt", evaluate.ckpt)->required();
  e->add_option("--manifest", evaluate.manifest)->required();
  e->add_option("--out", evaluate.out, "Report file (TSV)")->required();
  e->add_flag("--no-plus", evaluate.no_plus, "Checkpoint has plus connections disabled");
  add_tiling_flags(e, evaluate.tiling);

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of model gradients");
  g->add_option("--depth", gc.depth);
  g->add_option("--wide", gc.wide);
  g->add_option("--narrow", gc.narrow);
  g->add_option("--size", gc.size);
  g->add_option("--seed", gc.seed);
  g->add_option("--seeds", gc.seeds, "Number of consecutive seeds");
  g->add_option("--tol", gc.tol);
  g->add_option("--step", gc.h, "Finite-difference step");
  g->add_option("--floor", gc.floor, "Smallest denominator of the relative error");
  g->add_option("--refinements", gc.refinements, "Step reductions allowed near kinks");
  g->add_option("--max-per-input", gc.max_per_input, "Sample this many elements per tensor");
  g->add_flag("--no-plus", gc.no_plus);

  RfArgs rf;
  auto* r = app.add_subcommand("rf", "Report the theoretical receptive field");
  r->add_option("--depth", rf.depth);
  r->add_option("--tile", rf.tile);

  try {
    const std::vector<std::string> full = expand_config(app, args);
    std::vector<std::string> reversed(full.rbegin(), full.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    const auto chosen = app.get_subcommands();
    out << (chosen.empty() ? app.help() : chosen.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp& ex) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out, err);
    if (t->parsed()) return cmd_train(train, out, err);
    if (p->parsed()) return cmd_predict(predict, out, err);
    if (e->parsed()) return cmd_evaluate(evaluate, out, err);
    if (g->parsed()) return cmd_gradcheck(gc, out, err);
    if (r->parsed()) return cmd_rf(rf, out, err);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace deepunet
