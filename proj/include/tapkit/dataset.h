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

#ifndef TAPKIT_DATASET_H_
#define TAPKIT_DATASET_H_

// View hierarchies, screens and the element-selection rules used to decide
// which elements of a screen get labeled.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tapkit/image.h"
#include "tapkit/nn/rng.h"

namespace tapkit {

struct ViewElement {
  std::string id;
  std::string class_name;
  std::optional<std::string> text;
  Rect bounds;
  bool clickable = false;
  std::vector<ViewElement> children;

  bool is_leaf() const { return children.empty(); }
  friend bool operator==(const ViewElement&, const ViewElement&) = default;
};

struct ScreenRecord {
  std::string screen_id;
  Image screenshot;
  ViewElement root;
  // Status-bar and navigation-bar areas, in hierarchy coordinates.
  std::vector<Rect> excluded_zones;

  // Maps a rect from hierarchy coordinates into screenshot pixels. The two
  // agree for most corpora; Rico dumps hierarchies at a larger scale.
  Rect ToPixels(const Rect& r) const;

  friend bool operator==(const ScreenRecord&, const ScreenRecord&) = default;
};

struct ParsedHierarchy {
  ViewElement root;
  std::vector<std::string> warnings;
};

// Parses a Rico-style JSON view hierarchy. Accepts {"activity": {"root":
// node}}, {"root": node} or a bare node. A node carries "class", "bounds"
// ([left, top, right, bottom]), optional "clickable", "text", "id" and
// "children". Nodes without an "id" get their child-index path ("0.2.1").
// Nodes with empty or inverted bounds are dropped with their subtree; a
// missing "clickable" defaults to false. Both produce a warning. Throws
// ParseError naming the node path for anything else.
ParsedHierarchy ParseHierarchy(std::string_view json_text);
ParsedHierarchy ReadHierarchy(const std::filesystem::path& path);

// Writes the hierarchy back in the form ParseHierarchy reads, ids included.
std::string SerializeHierarchy(const ViewElement& root);

// Top 5% and bottom 5% of the screen height.
std::vector<Rect> DefaultExcludedZones(const Rect& root_bounds);

// Builds a screen from its parts; excluded zones default as above.
ScreenRecord MakeScreen(std::string screen_id, Image screenshot, ViewElement root);

// Pre-order traversal.
void ForEachElement(const ViewElement& root,
                    const std::function<void(const ViewElement&)>& fn);
const ViewElement* FindElement(const ViewElement& root, std::string_view id);
std::size_t CountElements(const ViewElement& root);

// Own text followed by descendant text in document order, space-joined.
std::string SubtreeText(const ViewElement& element);

struct SelectionLimits {
  std::size_t max_clickable = 5;
  std::size_t max_non_clickable = 5;
};

// Chooses the elements to label on a screen:
//  - clickable: for every leaf, the top-most clickable element on its path
//    from the root (so no selected element is inside another);
//  - non-clickable: leaves with no clickable element on their root path;
//  - anything intersecting an excluded zone is skipped;
//  - each candidate list is sorted by id, then up to the limit are drawn
//    without replacement using `rng`.
// Returned in document order.
std::vector<const ViewElement*> SelectElements(const ScreenRecord& screen,
                                               nn::RngStream& rng,
                                               SelectionLimits limits = {});

}  // namespace tapkit

#endif  // TAPKIT_DATASET_H_
