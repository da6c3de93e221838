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

#ifndef TAPKIT_PLOT_H_
#define TAPKIT_PLOT_H_

// Raster renderings of the analysis tables, from their JSON form.

#include "json.hpp"
#include "tapkit/image.h"

namespace tapkit {

// Cold-to-warm color for v in [0, 1].
std::array<std::uint8_t, 3> HeatColor(double v);

// HeatmapGrid::ToJson input. Each cell becomes a scale x scale block;
// cells without data are mid gray.
Image RenderHeatmap(const nlohmann::json& grid, int scale = 2);

// ColorPalette::ToJson input. One horizontal strip, each color's width
// proportional to its share.
Image RenderPalette(const nlohmann::json& palette, int width = 600, int height = 80);

// ConsistencyTable::ToJson input. One column per bin with a dot per
// probability and a bar at the bin mean; y = 1 at the top.
Image RenderBins(const nlohmann::json& bins, int column_width = 80, int height = 300);

}  // namespace tapkit

#endif  // TAPKIT_PLOT_H_
