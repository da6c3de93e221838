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

#ifndef TAPKIT_CORPUS_H_
#define TAPKIT_CORPUS_H_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tapkit/dataset.h"

namespace tapkit {

// One human judgement of one element. human_label: 1 = tappable.
struct LabeledExample {
  std::string screen_id;
  std::string element_id;
  int human_label = 0;
  int clickable = 0;
  std::string worker_id;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

// All ratings collected for one element, one per distinct worker.
struct RatingSet {
  std::string screen_id;
  std::string element_id;
  std::vector<int> ratings;
  std::vector<std::string> workers;

  int tappable_votes() const;
};

struct Corpus {
  std::map<std::string, ScreenRecord> screens;
  std::vector<LabeledExample> examples;
  nlohmann::json metadata = nlohmann::json::object();

  const ScreenRecord& screen(const std::string& screen_id) const;
  const ViewElement& element(const LabeledExample& example) const;

  // Throws DataError if an example names a missing screen or element, or a
  // label is outside {0, 1}.
  void Validate() const;

  // Copy holding only the given examples (and the screens they use).
  Corpus Subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Groups examples by (screen_id, element_id) in first-appearance order.
// Throws DataError if a worker rated the same element twice.
std::vector<RatingSet> GroupRatings(const std::vector<LabeledExample>& examples);

inline constexpr int kCorpusFormatVersion = 1;

// On-disk layout of a corpus directory:
//   manifest.json   format tag, version, metadata, screen list
//   examples.jsonl  one LabeledExample per line
//   screens/<id>.png, screens/<id>.json
void SaveCorpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus LoadCorpus(const std::filesystem::path& dir);

// Line-delimited example records; fields screen_id, element_id,
// human_label, clickable, worker_id. Errors name the 1-based line number.
std::string ExamplesToJsonl(const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> ExamplesFromJsonl(std::istream& in, const std::string& source);

// Rating files: lines of {screen_id, element_id, worker_id, label}.
std::vector<LabeledExample> ReadRatingsFile(const std::filesystem::path& path);

}  // namespace tapkit

#endif  // TAPKIT_CORPUS_H_
