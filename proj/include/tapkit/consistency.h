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

#ifndef TAPKIT_CONSISTENCY_H_
#define TAPKIT_CONSISTENCY_H_

// Agreement between raters who labeled the same elements, and how the
// model's output relates to that agreement.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tapkit/corpus.h"
#include "tapkit/features.h"
#include "tapkit/model.h"

namespace tapkit {

// Sum over the two categories of (share of raters choosing it)^2. 1 when
// the raters are unanimous, 0.5 at an even split. Ratings must be 0 or 1.
double AgreementScore(std::span<const int> ratings);

struct ElementAgreement {
  std::string screen_id;
  std::string element_id;
  std::string type;
  std::size_t raters = 0;
  int tappable_votes = 0;
  double score = 0.0;
};

struct AgreementResult {
  std::vector<ElementAgreement> elements;
  double overall_percent = 0.0;                   // mean score x 100
  std::map<std::string, double> percent_by_type;  // same, per vocabulary type
  nlohmann::json ToJson() const;
};

// Mean agreement score over rating sets, as a percentage.
double OverallAgreement(const std::vector<RatingSet>& sets);

// Groups the corpus's examples into rating sets and scores each one.
AgreementResult ComputeAgreement(const Corpus& corpus, const TypeVocabulary& types);

struct KappaResult {
  double kappa = 0.0;   // NaN when undefined
  double p_bar = 0.0;   // observed agreement
  double p_e = 0.0;     // chance agreement
  bool defined = false; // false when p_e == 1 (a single category was ever used)
  // Large-sample standard error under the null of chance agreement. Reported
  // for reference only.
  double standard_error = 0.0;
  nlohmann::json ToJson() const;
};

// counts[i][j]: raters who put element i in category j. Every row must sum
// to the same n >= 2; throws DataError otherwise.
KappaResult FleissKappa(const std::vector<std::vector<int>>& counts);

// Two-category count matrix (not tappable, tappable) from rating sets.
std::vector<std::vector<int>> CountMatrix(const std::vector<RatingSet>& sets);

inline constexpr int kBinRaters = 5;

struct ConsistencyBin {
  int tappable_votes = 0;  // 0..5
  std::string label;       // e.g. "5/5 not tappable", "4/5 tappable"
  std::vector<double> probabilities;
  std::optional<double> mean() const;  // empty for an empty bin
};

// Six bins ordered from unanimous not-tappable to unanimous tappable.
struct ConsistencyTable {
  std::array<ConsistencyBin, 6> bins;
  std::size_t total() const;
  nlohmann::json ToJson() const;
};

// Runs the model on every rated element and files its probability under the
// element's vote split. Throws DataError for an element without exactly five
// ratings.
ConsistencyTable ConsistencyBins(const Corpus& corpus, const Model& model,
                                 const EmbeddingTable& embeddings);

// Same binning from precomputed probabilities, one per rating set.
ConsistencyTable BinProbabilities(const std::vector<RatingSet>& sets,
                                  std::span<const double> probabilities);

}  // namespace tapkit

#endif  // TAPKIT_CONSISTENCY_H_
