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

#include "deepunet/metrics.hpp"

#include <cassert>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace deepunet {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp_land += o.tp_land;
  fp_land += o.fp_land;
  fn_land += o.fn_land;
  tp_sea += o.tp_sea;
  fp_sea += o.fp_sea;
  fn_sea += o.fn_sea;
  return *this;
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("confusion: prediction has " + std::to_string(pred.size()) +
                                " pixels, ground truth " + std::to_string(gt.size()));
  }
  // counts[p][g] with 0 = land, 1 = sea
  std::uint64_t counts[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::uint8_t p = pred[i], g = gt[i];
    if ((p != kSea && p != kLand) || (g != kSea && g != kLand)) {
      throw std::invalid_argument("confusion: pixel " + std::to_string(i) +
                                  " is not binary (pred " + std::to_string(p) + ", gt " +
                                  std::to_string(g) + ")");
    }
    ++counts[p == kSea][g == kSea];
  }
  ConfusionCounts c;
  c.tp_land = counts[0][0];
  c.fp_land = counts[0][1];
  c.fn_land = counts[1][0];
  c.tp_sea = counts[1][1];
  c.fp_sea = counts[1][0];
  c.fn_sea = counts[0][1];
  assert(c.fp_land == c.fn_sea && c.fp_sea == c.fn_land);
  return c;
}

ConfusionCounts confusion(const GrayImage& pred, const GrayImage& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("confusion: prediction is " + std::to_string(pred.height) + "x" +
                                std::to_string(pred.width) + ", ground truth " +
                                std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  return confusion(pred.pixels, gt.pixels);
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(const std::optional<double>& v, const char* spec) {
  if (!v) return "null";
  char buf[32];
  std::snprintf(buf, sizeof(buf), spec, *v);
  return buf;
}

}  // namespace

PrecisionRecall land_precision_recall(const ConfusionCounts& c) {
  return {ratio(c.tp_land, c.tp_land + c.fp_land), ratio(c.tp_land, c.tp_land + c.fn_land)};
}

PrecisionRecall sea_precision_recall(const ConfusionCounts& c) {
  return {ratio(c.tp_sea, c.tp_sea + c.fp_sea), ratio(c.tp_sea, c.tp_sea + c.fn_sea)};
}

PrecisionRecall overall_precision_recall(const ConfusionCounts& c) {
  const std::uint64_t tp = c.tp_land + c.tp_sea;
  return {ratio(tp, tp + c.fp_land + c.fp_sea), ratio(tp, tp + c.fn_land + c.fn_sea)};
}

std::optional<double> f1(std::optional<double> precision, std::optional<double> recall) {
  if (!precision || !recall) return std::nullopt;
  const double s = *precision + *recall;
  if (!(s > 0)) return std::nullopt;
  return 2.0 * *precision * *recall / s;
}

MetricRow metric_row(const std::string& name, const ConfusionCounts& c) {
  const auto land = land_precision_recall(c);
  const auto overall = overall_precision_recall(c);
  return {name, land.precision, land.recall, overall.precision, overall.recall,
          f1(land.precision, land.recall), c.total()};
}

EvaluationReport summarize(const std::vector<std::string>& names,
                           const std::vector<ConfusionCounts>& counts) {
  if (names.size() != counts.size()) {
    throw std::invalid_argument("summarize: " + std::to_string(names.size()) + " names for " +
                                std::to_string(counts.size()) + " count sets");
  }
  EvaluationReport r;
  ConfusionCounts pooled;
  for (std::size_t i = 0; i < names.size(); ++i) {
    r.images.push_back(metric_row(names[i], counts[i]));
    pooled += counts[i];
  }
  r.counts = counts;
  r.aggregate = metric_row("aggregate", pooled);
  return r;
}

std::string EvaluationReport::tsv() const {
  std::ostringstream os;
  os << "name\tlp\tlr\top\tor_\tf1\tpixels\n";
  auto row = [&os](const MetricRow& m) {
    os << m.name << "\t" << fmt(m.lp, "%.9g") << "\t" << fmt(m.lr, "%.9g") << "\t"
       << fmt(m.op, "%.9g") << "\t" << fmt(m.or_, "%.9g") << "\t" << fmt(m.f1, "%.9g") << "\t"
       << m.pixels << "\n";
  };
  for (const auto& m : images) row(m);
  row(aggregate);
  return os.str();
}

std::string EvaluationReport::table() const {
  std::size_t width = 9;
  for (const auto& m : images) width = std::max(width, m.name.size());
  std::ostringstream os;
  auto cell = [](const std::optional<double>& v) {
    std::string s = v ? fmt(*v * 100.0, "%.2f") : std::string("n/a");
    return std::string(8 - std::min<std::size_t>(8, s.size()), ' ') + s;
  };
  auto row = [&](const MetricRow& m) {
    os << m.name << std::string(width - m.name.size(), ' ') << cell(m.lp) << cell(m.lr)
       << cell(m.op) << cell(m.or_) << cell(m.f1) << "  " << m.pixels << "\n";
  };
  os << "name" << std::string(width - 4, ' ') << "      LP      LR      OP      OR      F1  pixels\n";
  for (const auto& m : images) row(m);
  os << std::string(width + 48, '-') << "\n";
  row(aggregate);
  return os.str();
}

EvaluationReport evaluate_set(const Model& model, const DatasetManifest& manifest,
                              const TilingOptions& options) {
  manifest.validate();
  std::vector<std::string> names;
  std::vector<ConfusionCounts> counts;
  for (const auto& e : manifest.entries) {
    const LabeledImage img = load_labeled(manifest.resolve(e.image), manifest.resolve(e.mask));
    const GrayImage pred = binarize(predict_image(model, img.rgb, options));
    names.push_back(e.image.filename().string());
    counts.push_back(confusion(pred, img.mask));
  }
  return summarize(names, counts);
}

}  // namespace deepunet
