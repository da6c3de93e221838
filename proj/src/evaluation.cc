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

#include "tapkit/evaluation.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tapkit/errors.h"
#include "tapkit/log.h"
#include "tapkit/nn/rng.h"

namespace tapkit {

using nlohmann::json;

PrCurve ComputePrCurve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractViolation("scores and labels differ in length");
  const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) throw DataError("PR curve needs at least one positive label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  PrCurve curve;
  std::size_t tp = 0, predicted = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) {
      ++predicted;
      tp += labels[order[i]] == 1;
    }
    curve.points.push_back({t, static_cast<double>(tp) / static_cast<double>(predicted),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  double prev_r = 0.0, prev_p = curve.points.front().precision;
  for (const PrPoint& p : curve.points) {
    curve.auc += (p.recall - prev_r) * (p.precision + prev_p) / 2.0;
    prev_r = p.recall;
    prev_p = p.precision;
  }
  return curve;
}

double SelectThreshold(const PrCurve& curve) {
  if (curve.points.empty()) throw ContractViolation("cannot pick a threshold from an empty curve");
  double best_f1 = -1.0, best_t = curve.points.front().threshold;
  // Thresholds decrease along the curve, so >= moves ties to the lower one.
  for (const PrPoint& p : curve.points) {
    const double sum = p.precision + p.recall;
    const double f1 = sum > 0.0 ? 2.0 * p.precision * p.recall / sum : 0.0;
    if (f1 >= best_f1) {
      best_f1 = f1;
      best_t = p.threshold;
    }
  }
  return best_t;
}

PrecisionRecall ComputePrecisionRecall(std::span<const int> predictions, std::span<const int> labels,
                                       int positive_class) {
  if (predictions.size() != labels.size()) {
    throw ContractViolation("predictions and labels differ in length");
  }
  std::size_t tp = 0, predicted = 0, actual = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = predictions[i] == positive_class;
    const bool real = labels[i] == positive_class;
    predicted += pred;
    actual += real;
    tp += pred && real;
  }
  PrecisionRecall pr;
  pr.precision_defined = predicted > 0;
  pr.recall_defined = actual > 0;
  pr.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
  pr.recall = actual > 0 ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
  return pr;
}

namespace {

json PrJson(const PrecisionRecall& pr) {
  return {{"precision", pr.precision},
          {"recall", pr.recall},
          {"precision_defined", pr.precision_defined},
          {"recall_defined", pr.recall_defined}};
}

json CurveJson(const PrCurve& c) {
  json points = json::array();
  for (const PrPoint& p : c.points) points.push_back({p.threshold, p.precision, p.recall});
  return {{"auc", c.auc}, {"points", std::move(points)}};
}

json SummaryJson(const CrossValidationSummary& s) {
  auto m = [](const MetricSummary& v) { return json{{"mean", v.mean}, {"sd", v.sd}}; };
  return {{"precision", m(s.precision)},
          {"recall", m(s.recall)},
          {"not_tappable_precision", m(s.not_tappable_precision)},
          {"not_tappable_recall", m(s.not_tappable_recall)},
          {"auc", m(s.auc)}};
}

CrossValidationSummary SummarizeReports(const std::vector<EvalReport>& reports) {
  std::vector<double> p, r, np, nr, auc;
  for (const auto& rep : reports) {
    p.push_back(rep.tappable.precision);
    r.push_back(rep.tappable.recall);
    np.push_back(rep.not_tappable.precision);
    nr.push_back(rep.not_tappable.recall);
    if (rep.curve) auc.push_back(rep.curve->auc);
  }
  CrossValidationSummary s;
  s.precision = Summarize(p);
  s.recall = Summarize(r);
  s.not_tappable_precision = Summarize(np);
  s.not_tappable_recall = Summarize(nr);
  if (!auc.empty()) s.auc = Summarize(auc);
  return s;
}

}  // namespace

json EvalReport::ToJson() const {
  json j = {
      {"fold", fold},
      {"n", n},
      {"threshold", threshold},
      {"confusion", {{"tp", confusion.tp}, {"fp", confusion.fp}, {"tn", confusion.tn}, {"fn", confusion.fn}}},
      {"tappable", PrJson(tappable)},
      {"not_tappable", PrJson(not_tappable)},
  };
  j["pr_curve"] = curve ? CurveJson(*curve) : json(nullptr);
  return j;
}

EvalReport MakeReport(std::span<const int> predictions, std::span<const int> labels,
                      std::optional<PrCurve> curve, int fold, double threshold) {
  if (predictions.size() != labels.size()) {
    throw ContractViolation("predictions and labels differ in length");
  }
  EvalReport r;
  r.fold = fold;
  r.n = labels.size();
  r.threshold = threshold;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = predictions[i] == 1, real = labels[i] == 1;
    if (pred && real) ++r.confusion.tp;
    else if (pred) ++r.confusion.fp;
    else if (real) ++r.confusion.fn;
    else ++r.confusion.tn;
  }
  r.tappable = ComputePrecisionRecall(predictions, labels, 1);
  r.not_tappable = ComputePrecisionRecall(predictions, labels, 0);
  r.curve = std::move(curve);
  return r;
}

std::vector<Fold> KFoldSplit(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > n) {
    throw ContractViolation("k-fold needs 1 <= k <= n (k=" + std::to_string(k) +
                            ", n=" + std::to_string(n) + ")");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::RngStream rng = nn::RngStream(seed).Split("kfold");
  rng.Shuffle(order.begin(), order.end());
  std::vector<Fold> folds(k);
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].validation.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                               order.begin() + static_cast<std::ptrdiff_t>(start + size));
    start += size;
  }
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].validation.begin(),
                                        folds[g].validation.end());
    }
  }
  return folds;
}

std::vector<std::size_t> UpsampleMinority(std::span<const std::size_t> indices,
                                          std::span<const int> labels, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (const std::size_t i : indices) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw DataError("upsampling needs both classes present");
  std::vector<std::size_t> out(indices.begin(), indices.end());
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit = std::max(pos.size(), neg.size()) - minority.size();
  nn::RngStream rng = nn::RngStream(seed).Split("upsample");
  for (std::size_t i = 0; i < deficit; ++i) out.push_back(minority[rng.Below(minority.size())]);
  return out;
}

Corpus UpsampleMinority(const Corpus& corpus, std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& ex : corpus.examples) labels.push_back(ex.human_label);
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return corpus.Subset(UpsampleMinority(all, labels, seed));
}

EvalReport BaselineClickable(const Corpus& corpus) {
  std::vector<int> pred, labels;
  for (const auto& ex : corpus.examples) {
    pred.push_back(ex.clickable);
    labels.push_back(ex.human_label);
  }
  return MakeReport(pred, labels);
}

MetricSummary Summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

json CrossValidation::ToJson() const {
  json f = json::array(), b = json::array();
  for (const auto& r : folds) f.push_back(r.ToJson());
  for (const auto& r : baseline_folds) b.push_back(r.ToJson());
  return {{"folds", std::move(f)},
          {"baseline_folds", std::move(b)},
          {"summary", SummaryJson(summary)},
          {"baseline_summary", SummaryJson(baseline)}};
}

CrossValidation CrossValidate(const Corpus& corpus, const ModelConfig& config,
                              const EmbeddingTable& embeddings, const TypeVocabulary& types,
                              const CrossValidationOptions& options) {
  const auto folds = KFoldSplit(corpus.examples.size(), options.k, options.seed);
  std::vector<int> labels;
  for (const auto& ex : corpus.examples) labels.push_back(ex.human_label);
  CrossValidation cv;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    logger().info("fold {}/{}", f + 1, folds.size());
    std::vector<std::size_t> train_idx = folds[f].train;
    if (options.upsample) train_idx = UpsampleMinority(train_idx, labels, options.seed + f);
    const Corpus train = corpus.Subset(train_idx);
    const Corpus validation = corpus.Subset(folds[f].validation);
    ModelConfig fold_config = config;
    fold_config.seed = config.seed + f;
    Model model = TrainModel(train, fold_config, embeddings, types, nullptr, options.train);
    const EncodedCorpus val = EncodeCorpus(validation, model.Context(embeddings));
    const auto scores = PredictAll(model, val);
    std::optional<PrCurve> curve;
    if (std::count(val.labels.begin(), val.labels.end(), 1) > 0) {
      curve = ComputePrCurve(scores, val.labels);
      model.threshold = SelectThreshold(*curve);
    } else {
      logger().warn("fold {} has no tappable examples; threshold stays 0.5", f);
    }
    std::vector<int> pred;
    for (const double s : scores) pred.push_back(s >= model.threshold ? 1 : 0);
    cv.folds.push_back(MakeReport(pred, val.labels, std::move(curve), static_cast<int>(f), model.threshold));
    EvalReport base = BaselineClickable(validation);
    base.fold = static_cast<int>(f);
    cv.baseline_folds.push_back(std::move(base));
  }
  cv.summary = SummarizeReports(cv.folds);
  cv.baseline = SummarizeReports(cv.baseline_folds);
  return cv;
}

}  // namespace tapkit
