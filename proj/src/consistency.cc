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

#include "tapkit/consistency.h"

#include <cmath>
#include <limits>
#include <map>

#include "tapkit/errors.h"

namespace tapkit {

using nlohmann::json;

double AgreementScore(std::span<const int> ratings) {
  if (ratings.empty()) throw ContractViolation("agreement score needs at least one rating");
  double yes = 0.0;
  for (const int r : ratings) {
    if (r != 0 && r != 1) throw DataError("rating " + std::to_string(r) + " is not 0 or 1");
    yes += r;
  }
  const double n = static_cast<double>(ratings.size());
  const double p = yes / n, q = (n - yes) / n;
  return p * p + q * q;
}

double OverallAgreement(const std::vector<RatingSet>& sets) {
  if (sets.empty()) throw ContractViolation("overall agreement needs at least one rated element");
  double sum = 0.0;
  for (const auto& s : sets) sum += AgreementScore(s.ratings);
  return 100.0 * sum / static_cast<double>(sets.size());
}

json AgreementResult::ToJson() const {
  json rows = json::array();
  for (const auto& e : elements) {
    rows.push_back({{"screen_id", e.screen_id},
                    {"element_id", e.element_id},
                    {"type", e.type},
                    {"raters", e.raters},
                    {"tappable_votes", e.tappable_votes},
                    {"score", e.score}});
  }
  return {{"overall_percent", overall_percent}, {"percent_by_type", percent_by_type}, {"elements", rows}};
}

AgreementResult ComputeAgreement(const Corpus& corpus, const TypeVocabulary& types) {
  const auto sets = GroupRatings(corpus.examples);
  AgreementResult r;
  r.overall_percent = OverallAgreement(sets);
  std::map<std::string, std::pair<double, std::size_t>> per_type;
  for (const auto& s : sets) {
    const ViewElement& el = corpus.element(LabeledExample{s.screen_id, s.element_id, 0, 0, {}});
    ElementAgreement e{s.screen_id, s.element_id, types.names()[types.Index(el.class_name)],
                       s.ratings.size(), s.tappable_votes(), AgreementScore(s.ratings)};
    auto& acc = per_type[e.type];
    acc.first += e.score;
    ++acc.second;
    r.elements.push_back(std::move(e));
  }
  for (const auto& [type, acc] : per_type) {
    r.percent_by_type[type] = 100.0 * acc.first / static_cast<double>(acc.second);
  }
  return r;
}

json KappaResult::ToJson() const {
  return {{"kappa", defined ? json(kappa) : json(nullptr)},
          {"p_bar", p_bar},
          {"p_e", p_e},
          {"defined", defined},
          {"standard_error", defined ? json(standard_error) : json(nullptr)}};
}

KappaResult FleissKappa(const std::vector<std::vector<int>>& counts) {
  if (counts.empty()) throw DataError("kappa needs at least one rated element");
  const std::size_t categories = counts.front().size();
  long long n = 0;
  for (const int c : counts.front()) n += c;
  if (n < 2) throw DataError("kappa needs at least two raters per element");
  std::vector<double> column(categories, 0.0);
  double p_sum = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != categories) throw DataError("kappa rows differ in category count");
    long long row = 0, agree = 0;
    for (std::size_t j = 0; j < categories; ++j) {
      const long long c = counts[i][j];
      if (c < 0) throw DataError("negative rating count in row " + std::to_string(i));
      row += c;
      agree += c * (c - 1);
      column[j] += static_cast<double>(c);
    }
    if (row != n) {
      throw DataError("row " + std::to_string(i) + " has " + std::to_string(row) + " ratings, expected " +
                      std::to_string(n));
    }
    p_sum += static_cast<double>(agree) / static_cast<double>(n * (n - 1));
  }
  const double big_n = static_cast<double>(counts.size());
  const double nn = static_cast<double>(n);
  KappaResult r;
  r.p_bar = p_sum / big_n;
  double sq = 0.0, cube = 0.0;
  for (const double col : column) {
    const double p = col / (big_n * nn);
    sq += p * p;
    cube += p * p * p;
  }
  r.p_e = sq;
  r.defined = r.p_e < 1.0;
  if (!r.defined) {
    r.kappa = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.kappa = (r.p_bar - r.p_e) / (1.0 - r.p_e);
  const double var = 2.0 / (big_n * nn * (nn - 1.0)) * (sq - (2.0 * nn - 3.0) * sq * sq + 2.0 * (nn - 2.0) * cube) /
                     ((1.0 - sq) * (1.0 - sq));
  r.standard_error = std::sqrt(std::max(var, 0.0));
  return r;
}

std::vector<std::vector<int>> CountMatrix(const std::vector<RatingSet>& sets) {
  std::vector<std::vector<int>> m;
  for (const auto& s : sets) {
    const int yes = s.tappable_votes();
    m.push_back({static_cast<int>(s.ratings.size()) - yes, yes});
  }
  return m;
}

std::optional<double> ConsistencyBin::mean() const {
  if (probabilities.empty()) return std::nullopt;
  double sum = 0.0;
  for (const double p : probabilities) sum += p;
  return sum / static_cast<double>(probabilities.size());
}

std::size_t ConsistencyTable::total() const {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.probabilities.size();
  return n;
}

json ConsistencyTable::ToJson() const {
  json out = json::array();
  for (const auto& b : bins) {
    const auto m = b.mean();
    out.push_back({{"label", b.label},
                   {"tappable_votes", b.tappable_votes},
                   {"n", b.probabilities.size()},
                   {"empty", b.probabilities.empty()},
                   {"mean", m ? json(*m) : json(nullptr)},
                   {"probabilities", b.probabilities}});
  }
  return out;
}

ConsistencyTable BinProbabilities(const std::vector<RatingSet>& sets, std::span<const double> probabilities) {
  if (sets.size() != probabilities.size()) throw ContractViolation("one probability per rating set expected");
  ConsistencyTable t;
  for (int v = 0; v <= kBinRaters; ++v) {
    auto& b = t.bins[static_cast<std::size_t>(v)];
    b.tappable_votes = v;
    const bool tappable = 2 * v > kBinRaters;
    const int agreeing = tappable ? v : kBinRaters - v;
    b.label = std::to_string(agreeing) + "/" + std::to_string(kBinRaters) + (tappable ? " tappable" : " not tappable");
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].ratings.size() != static_cast<std::size_t>(kBinRaters)) {
      throw DataError(sets[i].screen_id + "/" + sets[i].element_id + " has " + std::to_string(sets[i].ratings.size()) +
                      " ratings; binning needs exactly " + std::to_string(kBinRaters));
    }
    t.bins[static_cast<std::size_t>(sets[i].tappable_votes())].probabilities.push_back(probabilities[i]);
  }
  return t;
}

ConsistencyTable ConsistencyBins(const Corpus& corpus, const Model& model, const EmbeddingTable& embeddings) {
  const auto sets = GroupRatings(corpus.examples);
  // One example per rated element, in rating-set order.
  std::map<std::pair<std::string, std::string>, std::size_t> first;
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    first.emplace(std::make_pair(corpus.examples[i].screen_id, corpus.examples[i].element_id), i);
  }
  std::vector<std::size_t> picks;
  for (const auto& s : sets) picks.push_back(first.at({s.screen_id, s.element_id}));
  const EncodedCorpus data = EncodeCorpus(corpus.Subset(picks), model.Context(embeddings));
  const auto probabilities = PredictAll(model, data);
  return BinProbabilities(sets, probabilities);
}

}  // namespace tapkit
