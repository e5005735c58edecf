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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepunet/data.hpp"
#include "deepunet/image.hpp"
#include "deepunet/tiling.hpp"

namespace deepunet {

struct ConfusionCounts {
  std::uint64_t tp_land = 0, fp_land = 0, fn_land = 0;
  std::uint64_t tp_sea = 0, fp_sea = 0, fn_sea = 0;

  std::uint64_t total() const { return tp_land + fn_land + tp_sea + fn_sea; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Masks hold 0 (land) or 255 (sea). Throws on size mismatch or other values.
ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
ConfusionCounts confusion(const GrayImage& pred, const GrayImage& gt);

/// Undefined ratios (zero denominator) are nullopt.
struct PrecisionRecall {
  std::optional<double> precision;
  std::optional<double> recall;
};

PrecisionRecall land_precision_recall(const ConfusionCounts& c);
PrecisionRecall sea_precision_recall(const ConfusionCounts& c);
/// OP and OR; for binary masks both equal pixel accuracy.
PrecisionRecall overall_precision_recall(const ConfusionCounts& c);

std::optional<double> f1(std::optional<double> precision, std::optional<double> recall);

struct MetricRow {
  std::string name;
  std::optional<double> lp, lr, op, or_, f1;
  std::uint64_t pixels = 0;
};

MetricRow metric_row(const std::string& name, const ConfusionCounts& c);

struct EvaluationReport {
  std::vector<MetricRow> images;
  std::vector<ConfusionCounts> counts;
  MetricRow aggregate;  // from pooled counts

  /// Aligned human-readable table.
  std::string table() const;
  /// Tab-separated: header, one row per image, then the "aggregate" row.
  std::string tsv() const;
};

/// Micro-averaged report over named per-image counts.
EvaluationReport summarize(const std::vector<std::string>& names,
                           const std::vector<ConfusionCounts>& counts);

/// Predicts, binarizes and scores every manifest entry.
EvaluationReport evaluate_set(const Model& model, const DatasetManifest& manifest,
                              const TilingOptions& options);

}  // namespace deepunet
