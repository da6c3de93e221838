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

#ifndef TAPKIT_SIGNIFIERS_H_
#define TAPKIT_SIGNIFIERS_H_

// Descriptive analyses of which visual and textual cues go with perceived
// tappability in a labeled corpus.
//
// Two groupings are used. Accuracy analyses (by type, by location) group
// examples by the declared clickable attribute and count an example as
// correct when the human label agrees with it. Size, color and word
// analyses group by the human label.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tapkit/corpus.h"
#include "tapkit/features.h"

namespace tapkit {

enum class Polarity { kNotTappable = 0, kTappable = 1 };
const char* PolarityName(Polarity p);

struct ClassAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  // Empty when total is 0.
  std::optional<double> accuracy() const;
};

struct TypeAccuracy {
  std::string type;
  ClassAccuracy tappable;      // clickable elements
  ClassAccuracy not_tappable;  // non-clickable elements
};

// One row per vocabulary type present in the corpus, in vocabulary order.
std::vector<TypeAccuracy> AccuracyByType(const Corpus& corpus, const TypeVocabulary& types);

class HeatmapGrid {
 public:
  static constexpr int kWidth = 168;
  static constexpr int kHeight = 300;

  HeatmapGrid();

  // Adds one element given its box in normalized [0,1] screen space. A cell
  // is covered when its center lies in [x, x + w) x [y, y + h).
  void Add(const NormalizedBox& box, bool correct);

  std::uint32_t correct(int x, int y) const { return correct_[Index(x, y)]; }
  std::uint32_t total(int x, int y) const { return total_[Index(x, y)]; }
  // Empty for cells no element covered.
  std::optional<double> accuracy(int x, int y) const;

  // {"width", "height", "correct": [[...]], "total": [[...]]}, row-major.
  nlohmann::json ToJson() const;

 private:
  static std::size_t Index(int x, int y);
  std::vector<std::uint32_t> correct_;
  std::vector<std::uint32_t> total_;
};

// Grid over every example whose clickable attribute matches `cls`.
HeatmapGrid LocationHeatmap(const Corpus& corpus, Polarity cls);

struct ValueSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
};

// Element area as a fraction of the screen area.
struct SizeStats {
  ValueSummary tappable;
  ValueSummary not_tappable;
  // Clickable elements split by how they were labeled.
  ValueSummary clickable_labeled_tappable;
  ValueSummary clickable_labeled_not_tappable;
  // Per vocabulary type, split by label.
  std::map<std::string, std::array<ValueSummary, 2>> by_type;  // [not_tappable, tappable]

  // Each ratio is numerator / denominator of the means (or medians) and is
  // empty when either side has no elements or the denominator is 0.
  std::optional<double> mislabeled_to_labeled_mean_ratio() const;
  std::optional<double> type_mean_ratio(const std::string& type) const;    // not / tappable
  std::optional<double> type_median_ratio(const std::string& type) const;  // not / tappable

  nlohmann::json ToJson() const;
};

SizeStats ComputeSizeStats(const Corpus& corpus, const TypeVocabulary& types);

using Rgb = std::array<double, 3>;

struct PaletteEntry {
  Rgb color;
  double proportion = 0.0;
};

// Sorted by proportion (descending), then by color.
struct ColorPalette {
  std::vector<PaletteEntry> entries;
  nlohmann::json ToJson() const;
};

struct KMeansOptions {
  std::size_t k = 10;
  std::uint64_t seed = 1;
  int max_iterations = 100;
  double tolerance = 1e-6;
};

// Lloyd's algorithm with k-means++ seeding over the distinct points
// (duplicates act as weights). The input order does not affect the result.
// k is reduced, with a warning, when there are fewer distinct points.
ColorPalette KMeansPalette(const std::vector<Rgb>& points, const KMeansOptions& options);

// Samples up to `samples_per_element` pixels (uniformly, with replacement)
// from every example with the given human label and clusters them. The
// samples drawn for an element depend only on the seed and the element.
ColorPalette DominantColors(const Corpus& corpus, Polarity cls, std::size_t k = 10,
                            std::uint64_t seed = 1, std::size_t samples_per_element = 256);

struct Keyword {
  std::string term;
  double score = 0.0;
  friend bool operator==(const Keyword&, const Keyword&) = default;
};

// Two-document TF-IDF. tf is count / document length, idf is ln(2 / df).
// Every term of each document is scored; shared terms score 0.
struct TfIdfScores {
  std::map<std::string, double> a;
  std::map<std::string, double> b;
};
TfIdfScores ComputeTfIdf(const std::vector<std::string>& doc_a, const std::vector<std::string>& doc_b);

// Highest-scoring terms of each document, ties broken alphabetically, zero
// scores left out. Throws ContractViolation if a document is empty.
struct KeywordLists {
  std::vector<Keyword> a;
  std::vector<Keyword> b;
};
KeywordLists TfIdfKeywords(const std::vector<std::string>& doc_a,
                           const std::vector<std::string>& doc_b, std::size_t top_n = 5);

// Tokens of every tappable-labeled and every not-tappable-labeled example.
struct LabelDocuments {
  std::vector<std::string> tappable;
  std::vector<std::string> not_tappable;
};
LabelDocuments DocumentsByLabel(const Corpus& corpus);

struct WordCountStats {
  ValueSummary tappable;  // of ln(count + 1)
  ValueSummary not_tappable;
  // not_tappable / tappable of the means; empty if undefined.
  std::optional<double> mean_ratio() const;
  nlohmann::json ToJson() const;
};
WordCountStats ComputeWordCountStats(const Corpus& corpus);

}  // namespace tapkit

#endif  // TAPKIT_SIGNIFIERS_H_
