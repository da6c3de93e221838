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

#include "tapkit/features.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tapkit/errors.h"

namespace tapkit {

using nn::Tensor;

std::string Fingerprint(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

EmbeddingTable EmbeddingTable::Parse(std::string_view text) {
  EmbeddingTable table;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++lineno;
    std::istringstream in(line);
    std::string token;
    if (!(in >> token)) continue;
    WordVector v{};
    std::size_t n = 0;
    std::string num;
    while (in >> num) {
      if (n == kWordVectorDim) {
        throw ParseError("embeddings line " + std::to_string(lineno) + ": more than " +
                         std::to_string(kWordVectorDim) + " values");
      }
      char* stop = nullptr;
      v[n++] = std::strtof(num.c_str(), &stop);
      if (stop == num.c_str() || *stop != '\0') {
        throw ParseError("embeddings line " + std::to_string(lineno) + ": bad number \"" + num + "\"");
      }
    }
    if (n != kWordVectorDim) {
      throw ParseError("embeddings line " + std::to_string(lineno) + ": expected " +
                       std::to_string(kWordVectorDim) + " values, got " + std::to_string(n));
    }
    table.vectors_[token] = v;
  }
  table.fingerprint_ = Fingerprint(text);
  return table;
}

EmbeddingTable EmbeddingTable::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return Parse(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void EmbeddingTable::Add(const std::string& token, const WordVector& vector) {
  vectors_[token] = vector;
  fingerprint_.clear();
}

const WordVector& EmbeddingTable::Lookup(const std::string& token) const {
  static const WordVector kZero{};
  const auto it = vectors_.find(token);
  return it == vectors_.end() ? kZero : it->second;
}

std::string EmbeddingTable::Serialize() const {
  std::vector<std::string> tokens;
  tokens.reserve(vectors_.size());
  for (const auto& [t, _] : vectors_) tokens.push_back(t);
  std::sort(tokens.begin(), tokens.end());
  std::string out;
  char buf[32];
  for (const auto& t : tokens) {
    out += t;
    for (const float f : vectors_.at(t)) {
      std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(f));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void EmbeddingTable::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embeddings " + path.string());
  out << Serialize();
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

WordVector EmbedText(const std::vector<std::string>& tokens, const EmbeddingTable& table) {
  WordVector out{};
  bool any = false;
  for (const auto& t : tokens) {
    if (!table.Contains(t)) continue;
    const WordVector& v = table.Lookup(t);
    for (std::size_t i = 0; i < kWordVectorDim; ++i) out[i] = any ? std::max(out[i], v[i]) : v[i];
    any = true;
  }
  return out;
}

double WordCountFeature(std::size_t word_count) {
  return 1.0 - std::exp(-static_cast<double>(word_count) / 5.0);
}

// ---------------------------------------------------------------------------

TypeVocabulary::TypeVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() != kTypeVocabularySize) {
    throw DataError("type vocabulary must list " + std::to_string(kTypeVocabularySize) +
                    " names, got " + std::to_string(names_.size()));
  }
}

TypeVocabulary TypeVocabulary::Default() {
  return TypeVocabulary({"TextView", "ImageView", "View", "ViewGroup", "Button", "ImageButton",
                         "CheckBox", "RadioButton", "Switch", "ToggleButton", "EditText",
                         "Toolbar", "ListView", "RecyclerView", "CardView", "LinearLayout",
                         "RelativeLayout", "FrameLayout", "Spinner", "SeekBar", "ProgressBar",
                         "OTHER"});
}

TypeVocabulary TypeVocabulary::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open type vocabulary " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return TypeVocabulary(std::move(names));
}

std::size_t TypeVocabulary::Index(std::string_view class_name) const {
  for (std::size_t i = 0; i + 1 < names_.size(); ++i) {
    if (names_[i] == class_name) return i;
  }
  const auto dot = class_name.rfind('.');
  if (dot != std::string_view::npos) {
    const auto simple = class_name.substr(dot + 1);
    for (std::size_t i = 0; i + 1 < names_.size(); ++i) {
      if (names_[i] == simple) return i;
    }
  }
  return other_index();
}

std::string TypeVocabulary::Serialize() const {
  std::string out;
  for (const auto& n : names_) out += n + "\n";
  return out;
}

// ---------------------------------------------------------------------------

NormalizedBox EncodeBbox(const Rect& b, int screen_width, int screen_height) {
  if (screen_width <= 0 || screen_height <= 0) throw ContractViolation("screen dims must be positive");
  const double sw = screen_width, sh = screen_height;
  return {b.x / sw, b.y / sh, b.width / sw, b.height / sh};
}

namespace {

// Half-pixel-centered bilinear sample of channel c at source coords (sx, sy),
// clamped to the edge.
float Bilinear(const Image& img, const Rect& region, double sx, double sy, int c) {
  sx = std::clamp(sx, 0.0, static_cast<double>(region.width - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(region.height - 1));
  const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, region.width - 1), y1 = std::min(y0 + 1, region.height - 1);
  const double fx = sx - x0, fy = sy - y0;
  auto at = [&](int x, int y) {
    return static_cast<double>(img.pixel(region.x + x, region.y + y)[c]);
  };
  const double top = at(x0, y0) * (1 - fx) + at(x1, y0) * fx;
  const double bot = at(x0, y1) * (1 - fx) + at(x1, y1) * fx;
  return static_cast<float>((top * (1 - fy) + bot * fy) / 255.0);
}

}  // namespace

Tensor<float> CropResizeElement(const Image& screen, const Rect& bounds, std::size_t size) {
  const Rect crop = bounds.Intersect({0, 0, screen.width, screen.height});
  if (crop.empty()) {
    throw DataError("element crop is empty (bounds outside the screenshot or degenerate)");
  }
  Tensor<float> out({size, size, 3});
  const double scale_x = static_cast<double>(crop.width) / size;
  const double scale_y = static_cast<double>(crop.height) / size;
  for (std::size_t y = 0; y < size; ++y) {
    const double sy = (y + 0.5) * scale_y - 0.5;
    for (std::size_t x = 0; x < size; ++x) {
      const double sx = (x + 0.5) * scale_x - 0.5;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = Bilinear(screen, crop, sx, sy, c);
    }
  }
  return out;
}

Tensor<float> ResizeScreen(const Image& screen, std::size_t height, std::size_t width) {
  if (screen.empty()) throw DataError("screenshot is empty");
  if (screen.width > screen.height) {
    throw DataError("landscape screenshot (" + std::to_string(screen.width) + "x" +
                    std::to_string(screen.height) + ") is not supported");
  }
  const double src_h = screen.height, src_w = screen.width;
  const double width_at_full_height = src_w * height / src_h;
  std::size_t content_h, content_w;
  double scale;  // source pixels per output pixel
  if (std::floor(width_at_full_height + 1e-9) <= static_cast<double>(width)) {
    content_h = height;
    content_w = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(width_at_full_height + 1e-9)));
    scale = src_h / height;
  } else {
    content_w = width;
    content_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(src_h * width / src_w + 1e-9)));
    scale = src_w / width;
  }
  const std::size_t off_y = (height - content_h) / 2, off_x = (width - content_w) / 2;
  // Center any sub-pixel overshoot that was cropped.
  const double src_x0 = (src_w - content_w * scale) / 2.0;
  const double src_y0 = (src_h - content_h * scale) / 2.0;
  const Rect whole{0, 0, screen.width, screen.height};
  Tensor<float> out({height, width, 3});
  for (std::size_t y = 0; y < content_h; ++y) {
    const double sy = src_y0 + (y + 0.5) * scale - 0.5;
    for (std::size_t x = 0; x < content_w; ++x) {
      const double sx = src_x0 + (x + 0.5) * scale - 0.5;
      for (int c = 0; c < 3; ++c) out.at(off_y + y, off_x + x, c) = Bilinear(screen, whole, sx, sy, c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const Tensor<float>> EncodeScreen(const ScreenRecord& screen,
                                                  const FeatureShape& shape) {
  return std::make_shared<const Tensor<float>>(
      ResizeScreen(screen.screenshot, shape.screen_height, shape.screen_width));
}

FeatureBundle EncodeElement(const ScreenRecord& screen, const ViewElement& element,
                            const FeatureContext& ctx,
                            std::shared_ptr<const Tensor<float>> screen_image) {
  if (ctx.embeddings == nullptr || ctx.types == nullptr) {
    throw ContractViolation("feature context needs embeddings and a type vocabulary");
  }
  if (element.bounds.empty()) throw DataError("element " + element.id + " has degenerate bounds");
  FeatureBundle b;
  const auto tokens = Tokenize(SubtreeText(element));
  b.semantic = EmbedText(tokens, *ctx.embeddings);
  b.word_count = static_cast<float>(WordCountFeature(tokens.size()));
  b.type_index = ctx.types->Index(element.class_name);
  b.clickable = element.clickable ? 1 : 0;
  try {
    b.element_image = CropResizeElement(screen.screenshot, screen.ToPixels(element.bounds),
                                        ctx.shape.element_size);
  } catch (const DataError& e) {
    throw DataError("malformed hierarchy: element " + element.id + " on " + screen.screen_id +
                    ": " + e.what());
  }
  b.screen_image = screen_image ? std::move(screen_image) : EncodeScreen(screen, ctx.shape);
  const Rect& root = screen.root.bounds;
  Rect rel = element.bounds.Intersect(root);
  rel.x -= root.x;
  rel.y -= root.y;
  b.bbox = EncodeBbox(rel, root.width, root.height);
  return b;
}

std::string CheckBundle(const FeatureBundle& b, const FeatureShape& shape) {
  if (!(b.word_count >= 0.0f && b.word_count < 1.0f)) return "word_count outside [0,1)";
  if (b.type_index >= kTypeVocabularySize) return "type_index out of range";
  if (b.clickable != 0 && b.clickable != 1) return "clickable flag not 0/1";
  if (b.element_image.shape() != nn::Shape{shape.element_size, shape.element_size, 3}) {
    return "element_image shape";
  }
  if (!b.screen_image ||
      b.screen_image->shape() != nn::Shape{shape.screen_height, shape.screen_width, 3}) {
    return "screen_image shape";
  }
  for (const float v : b.element_image.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) return "element_image value outside [0,1]";
  }
  for (const float v : b.screen_image->values()) {
    if (!(v >= 0.0f && v <= 1.0f)) return "screen_image value outside [0,1]";
  }
  for (const double v : {b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h}) {
    if (!(v >= 0.0 && v <= 1.0)) return "bbox value outside [0,1]";
  }
  if (b.bbox.x + b.bbox.w > 1.0 + 1e-9 || b.bbox.y + b.bbox.h > 1.0 + 1e-9) {
    return "bbox extends past the screen";
  }
  for (const float v : b.semantic) {
    if (!std::isfinite(v)) return "semantic vector not finite";
  }
  return {};
}

}  // namespace tapkit
