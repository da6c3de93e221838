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

#ifndef TAPKIT_FEATURES_H_
#define TAPKIT_FEATURES_H_

// Encodes a (screen, element) pair into model inputs: max-pooled word
// vectors, a squashed word count, the element type, the clickable flag,
// element and screen pixels, and the normalized bounding box.

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tapkit/dataset.h"
#include "tapkit/image.h"
#include "tapkit/nn/tensor.h"

namespace tapkit {

inline constexpr std::size_t kWordVectorDim = 50;
using WordVector = std::array<float, kWordVectorDim>;

// Pre-trained word vectors, GloVe text format: a token followed by 50
// space-separated floats per line.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  static EmbeddingTable Load(const std::filesystem::path& path);
  static EmbeddingTable Parse(std::string_view text);

  void Add(const std::string& token, const WordVector& vector);
  bool Contains(const std::string& token) const { return vectors_.count(token) > 0; }
  // Absent tokens map to the zero vector.
  const WordVector& Lookup(const std::string& token) const;

  std::size_t size() const { return vectors_.size(); }
  // FNV-1a 64 of the source bytes, hex. Recomputed by Serialize for tables
  // built in memory.
  const std::string& fingerprint() const { return fingerprint_; }

  // Tokens in sorted order, so the output is byte-stable.
  std::string Serialize() const;
  void Save(const std::filesystem::path& path) const;

 private:
  std::unordered_map<std::string, WordVector> vectors_;
  std::string fingerprint_;
};

std::string Fingerprint(std::string_view bytes);

// Lowercases ASCII and splits on every non-alphanumeric byte.
std::vector<std::string> Tokenize(std::string_view text);

// Elementwise max over the vectors of in-vocabulary tokens; zero vector when
// none are in vocabulary.
WordVector EmbedText(const std::vector<std::string>& tokens, const EmbeddingTable& table);

// 1 - exp(-n / 5): 0 for no words, approaching 1 for long text.
double WordCountFeature(std::size_t word_count);

inline constexpr std::size_t kTypeVocabularySize = 22;

// Ordered list of element class names; the last entry is the catch-all
// OTHER slot.
class TypeVocabulary {
 public:
  static TypeVocabulary Default();
  static TypeVocabulary Load(const std::filesystem::path& path);
  explicit TypeVocabulary(std::vector<std::string> names);

  // Exact, case-sensitive match on the full class name, then on the part
  // after the last '.' (android.widget.Button -> Button); otherwise OTHER.
  std::size_t Index(std::string_view class_name) const;
  std::size_t other_index() const { return names_.size() - 1; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::string Serialize() const;

  friend bool operator==(const TypeVocabulary&, const TypeVocabulary&) = default;

 private:
  std::vector<std::string> names_;
};

struct NormalizedBox {
  double x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const NormalizedBox&, const NormalizedBox&) = default;
};

// x and w divided by the screen width, y and h by the screen height.
NormalizedBox EncodeBbox(const Rect& bounds, int screen_width, int screen_height);

// Crops `bounds` (screenshot pixels) and bilinearly resamples it to
// size x size x 3 in [0, 1]. Aspect ratio is not preserved. Throws DataError
// when the crop is empty.
nn::Tensor<float> CropResizeElement(const Image& screen, const Rect& bounds,
                                    std::size_t size = 32);

// Scales a portrait screenshot to fit height x width keeping its aspect
// ratio, centers it and zero-pads the rest. When the width at full height
// overshoots by less than one pixel the overshoot is cropped instead of
// shrinking the height. Throws DataError for landscape input.
nn::Tensor<float> ResizeScreen(const Image& screen, std::size_t height = 300,
                               std::size_t width = 168);

struct FeatureShape {
  std::size_t element_size = 32;
  std::size_t screen_height = 300;
  std::size_t screen_width = 168;
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

struct FeatureBundle {
  WordVector semantic{};
  float word_count = 0;
  std::size_t type_index = 0;
  int clickable = 0;
  nn::Tensor<float> element_image;
  // Shared by every element of a screen.
  std::shared_ptr<const nn::Tensor<float>> screen_image;
  NormalizedBox bbox;
};

// Everything needed to encode elements consistently.
struct FeatureContext {
  const EmbeddingTable* embeddings = nullptr;
  const TypeVocabulary* types = nullptr;
  FeatureShape shape;
};

std::shared_ptr<const nn::Tensor<float>> EncodeScreen(const ScreenRecord& screen,
                                                      const FeatureShape& shape);

// Text comes from the element subtree in the hierarchy. Pass the screen
// tensor from EncodeScreen to share it across a screen's elements.
FeatureBundle EncodeElement(const ScreenRecord& screen, const ViewElement& element,
                            const FeatureContext& ctx,
                            std::shared_ptr<const nn::Tensor<float>> screen_image);

// Checks every FeatureBundle range invariant; returns a description of the
// first violation or an empty string.
std::string CheckBundle(const FeatureBundle& bundle, const FeatureShape& shape);

}  // namespace tapkit

#endif  // TAPKIT_FEATURES_H_
