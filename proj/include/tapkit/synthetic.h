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

#ifndef TAPKIT_SYNTHETIC_H_
#define TAPKIT_SYNTHETIC_H_

// Generated screens whose tappability follows a known rule, for checking
// that the whole pipeline can learn without a human-labeled corpus.
//
// Layout: elements sit in a 2-column x 8-row grid spanning the area between
// the excluded status/navigation bands. Each element is a solid rectangle,
// either saturated blue or neutral gray.
//
// Planted rule: a blue element is tappable unless it sits in the top two
// rows; a gray element is tappable only in the bottom two rows. In
// normalized screen space that is
//   tappable = y_center > (blue ? kBlueThreshold : kGrayThreshold)
// which is linearly separable in (is_blue, y_center). Class names and text
// depend on the color only.

#include <cstdint>
#include <string>
#include <vector>

#include "tapkit/corpus.h"
#include "tapkit/features.h"

namespace tapkit {

struct SyntheticOptions {
  std::uint64_t seed = 7;
  std::size_t n_screens = 10;
  // Fraction of elements whose clickable attribute contradicts the label.
  double disagreement_rate = 0.0;
  int width = 270;
  int height = 480;
};

// Rule boundaries for a screen of the given height: the top of the third
// grid row and the top of the seventh (0.275 and 0.725 at 480 px).
struct PlantedRule {
  double blue_threshold;
  double gray_threshold;
  bool Tappable(bool blue, double y_center) const {
    return y_center > (blue ? blue_threshold : gray_threshold);
  }
};
PlantedRule PlantedRuleFor(int height);

// Every screen gets 5 clickable and 5 non-clickable leaves, all of which
// SelectElements picks, so the corpus holds 10 * n_screens examples.
Corpus GenerateSynthetic(const SyntheticOptions& options);

struct ConsistencyOptions {
  std::uint64_t seed = 11;
  std::size_t n_screens = 20;
  std::size_t raters = 5;
  int width = 270;
  int height = 480;
};

// Multi-rater corpus. Each element's color is a blend between gray and blue
// at one of six levels t in {0, .2, .4, .6, .8, 1}; every rater calls it
// tappable with probability t. Elements with t > 0.5 are clickable.
Corpus GenerateConsistencySynthetic(const ConsistencyOptions& options);

// Words used for synthetic element text.
const std::vector<std::string>& SyntheticWords();
// Random 50-d vectors for SyntheticWords().
EmbeddingTable SyntheticEmbeddings(std::uint64_t seed);

}  // namespace tapkit

#endif  // TAPKIT_SYNTHETIC_H_
