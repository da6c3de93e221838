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

#include "tapkit/plot.h"

#include <algorithm>
#include <cmath>

#include "tapkit/errors.h"

namespace tapkit {

using nlohmann::json;

std::array<std::uint8_t, 3> HeatColor(double v) {
  // Blue -> cyan -> green -> yellow -> red.
  static constexpr std::array<std::array<double, 3>, 5> kStops{
      {{0, 0, 255}, {0, 200, 255}, {0, 200, 0}, {255, 220, 0}, {230, 0, 0}}};
  v = std::clamp(v, 0.0, 1.0) * (kStops.size() - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(v), kStops.size() - 2);
  const double t = v - static_cast<double>(i);
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k) {
    c[k] = static_cast<std::uint8_t>(std::lround(kStops[i][k] + t * (kStops[i + 1][k] - kStops[i][k])));
  }
  return c;
}

Image RenderHeatmap(const json& grid, int scale) {
  try {
    const int w = grid.at("width"), h = grid.at("height");
    const auto& correct = grid.at("correct");
    const auto& total = grid.at("total");
    Image img(w * scale, h * scale, {128, 128, 128});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double t = total.at(y).at(x);
        if (t <= 0) continue;
        const double c = correct.at(y).at(x);
        img.FillRect({x * scale, y * scale, scale, scale}, HeatColor(c / t));
      }
    }
    return img;
  } catch (const json::exception& e) {
    throw DataError(std::string("not a heatmap table: ") + e.what());
  }
}

Image RenderPalette(const json& palette, int width, int height) {
  if (!palette.is_array()) throw DataError("not a palette table");
  Image img(width, height, {255, 255, 255});
  double start = 0.0;
  try {
    for (const auto& e : palette) {
      const double share = e.at("proportion");
      const auto& rgb = e.at("rgb");
      std::array<std::uint8_t, 3> c{};
      for (int k = 0; k < 3; ++k) c[k] = static_cast<std::uint8_t>(std::lround(std::clamp(rgb.at(k).get<double>(), 0.0, 1.0) * 255));
      const int x0 = static_cast<int>(std::lround(start * width));
      start += share;
      const int x1 = static_cast<int>(std::lround(start * width));
      img.FillRect({x0, 0, x1 - x0, height}, c);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("not a palette table: ") + e.what());
  }
  return img;
}

Image RenderBins(const json& bins, int column_width, int height) {
  if (!bins.is_array()) throw DataError("not a bin table");
  const int n = static_cast<int>(bins.size());
  Image img(n * column_width, height, {255, 255, 255});
  auto y_of = [height](double p) {
    return std::clamp(static_cast<int>(std::lround((1.0 - p) * (height - 1))), 0, height - 1);
  };
  try {
    for (int b = 0; b < n; ++b) {
      const int x0 = b * column_width;
      img.FillRect({x0, 0, 1, height}, {200, 200, 200});
      const auto& probs = bins[b].at("probabilities");
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        // Spread the dots across the column so they do not all overlap.
        const int x = x0 + 10 + static_cast<int>((i * 37) % static_cast<std::size_t>(std::max(1, column_width - 20)));
        img.FillRect({x - 1, y_of(p) - 1, 3, 3}, HeatColor(p));
      }
      if (!bins[b].at("mean").is_null()) {
        img.FillRect({x0 + 4, y_of(bins[b]["mean"].get<double>()) - 1, column_width - 8, 3}, {0, 0, 0});
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("not a bin table: ") + e.what());
  }
  return img;
}

}  // namespace tapkit
