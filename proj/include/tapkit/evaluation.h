// Copyright 2026 The TapKit Authors.
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

#ifndef TAPKIT_EVALUATION_H_
#define TAPKIT_EVALUATION_H_

// Precision/recall analysis, threshold selection, k-fold splits, class
// balancing, the clickable-attribute baseline and cross validation.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "tapkit/corpus.h"
#include "tapkit/model.h"

namespace tapkit {

struct PrPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

// Points ordered by strictly decreasing threshold (so recall never
// decreases). A point at threshold t predicts positive for score >= t.
struct PrCurve {
  std::vector<PrPoint> points;
  double auc = 0;
  friend bool operator==(const PrCurve&, const PrCurve&) = default;
};

// One point per distinct score. AUC is the trapezoidal area over recall,
// starting from (recall 0, precision of the first point). Throws
// ContractViolation on length mismatch and DataError without positives.
PrCurve ComputePrCurve(std::span<const double> scores, std::span<const int> labels);

// Threshold of the point with the highest F1; ties go to the lower
// threshold. Throws ContractViolation for an empty curve.
double SelectThreshold(const PrCurve& curve);

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
  // False when nothing was predicted positive; precision is then 0.
  bool precision_defined = true;
  // False when the positive class never occurs; recall is then 0.
  bool recall_defined = true;
};

PrecisionRecall ComputePrecisionRecall(std::span<const int> predictions,
                                       std::span<const int> labels, int positive_class = 1);

struct ConfusionMatrix {
  // Counts with label 1 as the positive class.
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t n() const { return tp + fp + tn + fn; }
};

struct EvalReport {
  int fold = -1;  // -1 outside cross validation
  std::size_t n = 0;
  double threshold = 0.5;
  ConfusionMatrix confusion;
  PrecisionRecall tappable;      // positive class 1
  PrecisionRecall not_tappable;  // positive class 0
  std::optional<PrCurve> curve;

  nlohmann::json ToJson() const;
};

// Report for hard predictions; `curve` is attached as is.
EvalReport MakeReport(std::span<const int> predictions, std::span<const int> labels,
                      std::optional<PrCurve> curve = std::nullopt, int fold = -1,
                      double threshold = 0.5);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Seeded shuffle of 0..n-1 cut into k contiguous folds; the first n % k
// folds hold one extra index. Throws ContractViolation unless 1 <= k <= n.
std::vector<Fold> KFoldSplit(std::size_t n, std::size_t k, std::uint64_t seed);

// Returns `indices` plus minority-class indices drawn with replacement until
// both classes have equal counts. Throws DataError if a class is absent.
std::vector<std::size_t> UpsampleMinority(std::span<const std::size_t> indices,
                                          std::span<const int> labels, std::uint64_t seed);
Corpus UpsampleMinority(const Corpus& corpus, std::uint64_t seed);

// Uses each example's clickable attribute as the prediction of its human
// label.
EvalReport BaselineClickable(const Corpus& corpus);

struct MetricSummary {
  double mean = 0;
  double sd = 0;  // sample standard deviation; 0 for a single value
};
MetricSummary Summarize(std::span<const double> values);

struct CrossValidationSummary {
  MetricSummary precision;  // tappable class
  MetricSummary recall;
  MetricSummary not_tappable_precision;
  MetricSummary not_tappable_recall;
  MetricSummary auc;
};

struct CrossValidation {
  std::vector<EvalReport> folds;
  std::vector<EvalReport> baseline_folds;  // clickable attribute on each validation fold
  CrossValidationSummary summary;
  CrossValidationSummary baseline;

  nlohmann::json ToJson() const;
};

struct CrossValidationOptions {
  std::size_t k = 10;
  std::uint64_t seed = 1;
  bool upsample = true;
  TrainOptions train;
};

// Trains one model per fold on the (upsampled) training indices, picks that
// fold's threshold from its validation PR curve and reports on the
// validation fold.
CrossValidation CrossValidate(const Corpus& corpus, const ModelConfig& config,
                              const EmbeddingTable& embeddings, const TypeVocabulary& types,
                              const CrossValidationOptions& options);

}  // namespace tapkit

#endif  // TAPKIT_EVALUATION_H_
