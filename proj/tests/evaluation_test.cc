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

#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "tapkit/errors.h"
#include "tapkit/evaluation.h"
#include "tapkit/nn/rng.h"
#include "tapkit/synthetic.h"

using namespace tapkit;

namespace {

// Brute force: every distinct score as a threshold, counted from scratch,
// then the trapezoid from the (0, first precision) anchor.
PrCurve CurveOracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  PrCurve c;
  for (const double t : thresholds) {
    double tp = 0, pp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++pp;
        tp += labels[i];
      }
    }
    c.points.push_back({t, tp / pp, tp / pos});
  }
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const double r0 = i ? c.points[i - 1].recall : 0.0;
    const double p0 = i ? c.points[i - 1].precision : c.points[0].precision;
    c.auc += (c.points[i].recall - r0) * (c.points[i].precision + p0) / 2;
  }
  return c;
}

}  // namespace

TEST_CASE("pr_curve special cases") {
  const std::vector<double> perfect{0.9, 0.8, 0.7, 0.3, 0.2, 0.1};
  const std::vector<int> labels{1, 1, 1, 0, 0, 0};
  CHECK(ComputePrCurve(perfect, labels).auc == 1.0);

  const auto flat = ComputePrCurve(std::vector<double>(4, 0.4), std::vector<int>{1, 0, 1, 0});
  REQUIRE(flat.points.size() == 1);
  CHECK(flat.points[0] == PrPoint{0.4, 0.5, 1.0});

  std::vector<double> reversed(perfect.size());
  std::transform(perfect.begin(), perfect.end(), reversed.begin(), [](double s) { return -s; });
  CHECK(ComputePrCurve(reversed, labels).auc <= ComputePrCurve(perfect, labels).auc);

  CHECK_THROWS_AS(ComputePrCurve(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), DataError);
  CHECK_THROWS_AS(ComputePrCurve(std::vector<double>{0.1}, std::vector<int>{1, 0}), ContractViolation);
}

TEST_CASE("pr_curve matches the brute-force oracle on random cases") {
  nn::RngStream rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 20;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so ties happen.
      scores[i] = static_cast<double>(rng.Below(8)) / 8.0;
      labels[i] = rng.Bernoulli(0.4) ? 1 : 0;
    }
    labels[rng.Below(n)] = 1;
    const auto got = ComputePrCurve(scores, labels);
    const auto want = CurveOracle(scores, labels);
    REQUIRE(got.points.size() == want.points.size());
    for (std::size_t i = 0; i < got.points.size(); ++i) {
      CHECK(got.points[i].threshold == want.points[i].threshold);
      CHECK(std::abs(got.points[i].precision - want.points[i].precision) < 1e-12);
      CHECK(std::abs(got.points[i].recall - want.points[i].recall) < 1e-12);
      if (i) {
        CHECK(got.points[i].threshold < got.points[i - 1].threshold);
        CHECK(got.points[i].recall >= got.points[i - 1].recall);
      }
    }
    CHECK(std::abs(got.auc - want.auc) < 1e-9);
    CHECK(got.auc >= 0.0);
    CHECK(got.auc <= 1.0);
  }
}

TEST_CASE("select_threshold") {
  PrCurve c;
  c.points = {{0.9, 1.0, 0.2}, {0.6, 0.9, 0.8}, {0.3, 0.5, 1.0}};
  CHECK(SelectThreshold(c) == 0.6);
  c.points = {{0.9, 0.5, 0.5}, {0.6, 0.5, 0.5}, {0.3, 0.5, 0.5}};
  CHECK(SelectThreshold(c) == 0.3);
  CHECK_THROWS_AS(SelectThreshold(PrCurve{}), ContractViolation);

  nn::RngStream rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores(10);
    std::vector<int> labels(10);
    for (int i = 0; i < 10; ++i) {
      scores[i] = rng.Uniform();
      labels[i] = static_cast<int>(rng.Below(2));
    }
    labels[0] = 1;
    const auto curve = ComputePrCurve(scores, labels);
    double best = -1, best_t = 0;
    for (const auto& p : curve.points) {
      const double f1 = p.precision + p.recall > 0 ? 2 * p.precision * p.recall / (p.precision + p.recall) : 0;
      if (f1 > best || (f1 == best && p.threshold < best_t)) {
        best = f1;
        best_t = p.threshold;
      }
    }
    CHECK(SelectThreshold(curve) == best_t);
  }
}

TEST_CASE("precision_recall and confusion matrix") {
  const std::vector<int> labels{1, 1, 0, 0}, pred{1, 0, 0, 1};
  auto pr = ComputePrecisionRecall(labels, labels);
  CHECK(pr.precision == 1.0);
  CHECK(pr.recall == 1.0);
  pr = ComputePrecisionRecall(pred, labels);
  CHECK(pr.precision == 0.5);
  CHECK(pr.recall == 0.5);

  // positive_class = 0 is the same as flipping every value.
  nn::RngStream rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> p(12), l(12), fp(12), fl(12);
    for (int i = 0; i < 12; ++i) {
      p[i] = static_cast<int>(rng.Below(2));
      l[i] = static_cast<int>(rng.Below(2));
      fp[i] = 1 - p[i];
      fl[i] = 1 - l[i];
    }
    const auto a = ComputePrecisionRecall(p, l, 0), b = ComputePrecisionRecall(fp, fl, 1);
    CHECK(a.precision == b.precision);
    CHECK(a.recall == b.recall);
    const auto report = MakeReport(p, l);
    const auto& m = report.confusion;
    CHECK(m.n() == 12);
    if (m.tp + m.fp) CHECK(report.tappable.precision == static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp));
    if (m.tp + m.fn) CHECK(report.tappable.recall == static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn));
    if (m.tn + m.fn) CHECK(report.not_tappable.precision == static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fn));
    if (m.tn + m.fp) CHECK(report.not_tappable.recall == static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp));
  }

  const auto none = ComputePrecisionRecall(std::vector<int>{0, 0}, std::vector<int>{1, 0});
  CHECK_FALSE(none.precision_defined);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
}

TEST_CASE("kfold_split") {
  auto folds = KFoldSplit(10, 10, 1);
  for (const auto& f : folds) {
    CHECK(f.validation.size() == 1);
    CHECK(f.train.size() == 9);
  }
  folds = KFoldSplit(23, 10, 5);
  std::multiset<std::size_t> sizes;
  std::vector<std::size_t> all;
  for (const auto& f : folds) {
    sizes.insert(f.validation.size());
    all.insert(all.end(), f.validation.begin(), f.validation.end());
    std::set<std::size_t> train(f.train.begin(), f.train.end());
    for (const auto v : f.validation) CHECK(train.count(v) == 0);
    CHECK(f.train.size() + f.validation.size() == 23);
  }
  CHECK(sizes == std::multiset<std::size_t>{2, 2, 2, 2, 2, 2, 2, 3, 3, 3});
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> want(23);
  std::iota(want.begin(), want.end(), std::size_t{0});
  CHECK(all == want);
  CHECK(KFoldSplit(23, 10, 5)[4].validation == folds[4].validation);
  CHECK_THROWS_AS(KFoldSplit(3, 4, 1), ContractViolation);
  CHECK_THROWS_AS(KFoldSplit(3, 0, 1), ContractViolation);
}

TEST_CASE("upsample_minority") {
  const std::vector<int> labels{1, 1, 1, 1, 1, 1, 0, 0, 0};
  std::vector<std::size_t> idx(9);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto up = UpsampleMinority(idx, labels, 3);
  CHECK(up.size() == 12);
  CHECK(std::count_if(up.begin(), up.end(), [&](std::size_t i) { return labels[i] == 0; }) == 6);
  CHECK(std::equal(idx.begin(), idx.end(), up.begin()));
  CHECK(UpsampleMinority(idx, labels, 3) == up);

  const std::vector<std::size_t> subset{0, 1, 6};
  for (const auto i : UpsampleMinority(subset, labels, 1)) CHECK((i == 0 || i == 1 || i == 6));

  const std::vector<int> balanced{1, 0, 1, 0};
  const std::vector<std::size_t> four{0, 1, 2, 3};
  CHECK(UpsampleMinority(four, balanced, 1) == four);
  CHECK_THROWS_AS(UpsampleMinority(four, std::vector<int>{1, 1, 1, 1}, 1), DataError);

  auto corpus = GenerateSynthetic({.seed = 1, .n_screens = 2});
  corpus.examples.resize(15);
  const auto balanced_corpus = UpsampleMinority(corpus, 2);
  const auto pos = std::count_if(balanced_corpus.examples.begin(), balanced_corpus.examples.end(),
                                 [](const LabeledExample& e) { return e.human_label == 1; });
  CHECK(static_cast<std::size_t>(2 * pos) == balanced_corpus.examples.size());
}

TEST_CASE("baseline_clickable") {
  Corpus c = GenerateSynthetic({.seed = 1, .n_screens = 1});
  auto r = BaselineClickable(c);
  CHECK(r.tappable.precision == 1.0);
  CHECK(r.tappable.recall == 1.0);
  c.examples.resize(4);
  const int labels[] = {1, 1, 0, 0}, clickable[] = {1, 0, 0, 1};
  for (int i = 0; i < 4; ++i) {
    c.examples[i].human_label = labels[i];
    c.examples[i].clickable = clickable[i];
  }
  r = BaselineClickable(c);
  CHECK(r.tappable.precision == 0.5);
  CHECK(r.tappable.recall == 0.5);
  CHECK(r.n == 4);
}

TEST_CASE("summaries") {
  const std::vector<double> v{0.8, 0.9, 1.0};
  const auto s = Summarize(v);
  CHECK(s.mean == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.sd == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(Summarize(std::vector<double>{0.5}).sd == 0.0);
}

TEST_CASE("cross_validate: fold bookkeeping and determinism") {
  const auto corpus = GenerateSynthetic({.seed = 9, .n_screens = 3});
  const auto embeddings = SyntheticEmbeddings(9);
  ModelConfig config;
  config.steps = 4;
  config.batch_size = 8;
  CrossValidationOptions opt;
  opt.k = 3;
  opt.seed = 5;
  const auto cv = CrossValidate(corpus, config, embeddings, TypeVocabulary::Default(), opt);
  REQUIRE(cv.folds.size() == 3);
  std::size_t n = 0;
  double mean_p = 0;
  for (const auto& f : cv.folds) {
    n += f.n;
    mean_p += f.tappable.precision / 3.0;
    CHECK(f.curve.has_value());
    CHECK(f.confusion.n() == f.n);
  }
  CHECK(n == corpus.examples.size());
  CHECK(cv.summary.precision.mean == doctest::Approx(mean_p).epsilon(1e-12));
  CHECK(cv.baseline.precision.mean == 1.0);
  const auto again = CrossValidate(corpus, config, embeddings, TypeVocabulary::Default(), opt);
  CHECK(again.ToJson().dump() == cv.ToJson().dump());
}
