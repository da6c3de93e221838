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

#ifndef TAPKIT_IMAGE_H_
#define TAPKIT_IMAGE_H_

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tapkit {

// Pixel rectangle; x/y is the top-left corner.
struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  int right() const { return x + width; }
  int bottom() const { return y + height; }
  bool empty() const { return width <= 0 || height <= 0; }
  long long area() const { return empty() ? 0 : 1LL * width * height; }

  Rect Intersect(const Rect& o) const {
    const int l = std::max(x, o.x), t = std::max(y, o.y);
    const int r = std::min(right(), o.right()), b = std::min(bottom(), o.bottom());
    return {l, t, std::max(0, r - l), std::max(0, b - t)};
  }
  bool Intersects(const Rect& o) const { return !Intersect(o).empty(); }
  bool Contains(const Rect& o) const {
    return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

// 8-bit RGB, row-major, 3 bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::array<std::uint8_t, 3> fill = {0, 0, 0})
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
      rgb[i] = fill[0];
      rgb[i + 1] = fill[1];
      rgb[i + 2] = fill[2];
    }
  }

  bool empty() const { return width <= 0 || height <= 0; }
  std::uint8_t* pixel(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* pixel(int x, int y) const {
    return &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
  }

  void FillRect(const Rect& r, std::array<std::uint8_t, 3> color) {
    const Rect c = r.Intersect({0, 0, width, height});
    for (int y = c.y; y < c.bottom(); ++y) {
      for (int x = c.x; x < c.right(); ++x) {
        std::uint8_t* p = pixel(x, y);
        p[0] = color[0];
        p[1] = color[1];
        p[2] = color[2];
      }
    }
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// PNG codec (libpng simplified API). Any PNG color type is converted to
// 8-bit RGB on decode. Throws DataError on malformed input.
Image DecodePng(std::span<const std::uint8_t> bytes);
Image ReadPng(const std::filesystem::path& path);
std::vector<std::uint8_t> EncodePng(const Image& image);
void WritePng(const std::filesystem::path& path, const Image& image);

}  // namespace tapkit

#endif  // TAPKIT_IMAGE_H_
