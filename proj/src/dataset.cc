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

#include "tapkit/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "tapkit/errors.h"
#include "tapkit/log.h"

namespace tapkit {

using nlohmann::json;

Rect ScreenRecord::ToPixels(const Rect& r) const {
  const Rect& rb = root.bounds;
  if (rb.empty() || screenshot.empty() ||
      (rb.x == 0 && rb.y == 0 && rb.width == screenshot.width &&
       rb.height == screenshot.height)) {
    return r;
  }
  const double sx = static_cast<double>(screenshot.width) / rb.width;
  const double sy = static_cast<double>(screenshot.height) / rb.height;
  const int l = static_cast<int>(std::floor((r.x - rb.x) * sx));
  const int t = static_cast<int>(std::floor((r.y - rb.y) * sy));
  const int rr = static_cast<int>(std::ceil((r.right() - rb.x) * sx));
  const int bb = static_cast<int>(std::ceil((r.bottom() - rb.y) * sy));
  return {l, t, rr - l, bb - t};
}

namespace {

struct ParseContext {
  std::vector<std::string> warnings;
  std::unordered_set<std::string> ids;
};

int ReadCoord(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path + ": bounds entries must be numbers");
  return static_cast<int>(std::lround(v.get<double>()));
}

std::optional<ViewElement> ParseNode(const json& node, const std::string& path,
                                     const std::string& auto_id, ParseContext& ctx) {
  if (!node.is_object()) throw ParseError(path + ": node must be an object");
  ViewElement e;

  const auto cls = node.find("class");
  if (cls == node.end() || !cls->is_string()) {
    throw ParseError(path + ": missing or non-string \"class\"");
  }
  e.class_name = cls->get<std::string>();

  const auto bounds = node.find("bounds");
  if (bounds == node.end() || !bounds->is_array() || bounds->size() != 4) {
    throw ParseError(path + ": \"bounds\" must be [left, top, right, bottom]");
  }
  const int l = ReadCoord((*bounds)[0], path), t = ReadCoord((*bounds)[1], path);
  const int r = ReadCoord((*bounds)[2], path), b = ReadCoord((*bounds)[3], path);
  if (r <= l || b <= t) {
    ctx.warnings.push_back(path + ": empty or inverted bounds, node dropped");
    return std::nullopt;
  }
  e.bounds = {l, t, r - l, b - t};

  if (const auto it = node.find("clickable"); it == node.end() || it->is_null()) {
    ctx.warnings.push_back(path + ": missing \"clickable\", defaulting to false");
  } else if (it->is_boolean()) {
    e.clickable = it->get<bool>();
  } else {
    throw ParseError(path + ": \"clickable\" must be a boolean");
  }

  if (const auto it = node.find("text"); it != node.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError(path + ": \"text\" must be a string");
    e.text = it->get<std::string>();
  }

  if (const auto it = node.find("id"); it != node.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError(path + ": \"id\" must be a string");
    e.id = it->get<std::string>();
  } else {
    e.id = auto_id;
  }
  if (!ctx.ids.insert(e.id).second) throw ParseError(path + ": duplicate id \"" + e.id + "\"");

  if (const auto it = node.find("children"); it != node.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(path + ": \"children\" must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& child = (*it)[i];
      if (child.is_null()) continue;  // Rico dumps contain null placeholders.
      const std::string child_path = path + ".children[" + std::to_string(i) + "]";
      auto parsed = ParseNode(child, child_path, auto_id + "." + std::to_string(i), ctx);
      if (!parsed) continue;
      if (!parsed->bounds.Intersects(e.bounds)) {
        ctx.warnings.push_back(child_path + ": bounds do not intersect parent");
      }
      e.children.push_back(std::move(*parsed));
    }
  }
  return e;
}

json NodeToJson(const ViewElement& e) {
  json j;
  j["id"] = e.id;
  j["class"] = e.class_name;
  j["bounds"] = {e.bounds.x, e.bounds.y, e.bounds.right(), e.bounds.bottom()};
  j["clickable"] = e.clickable;
  if (e.text) j["text"] = *e.text;
  json children = json::array();
  for (const auto& c : e.children) children.push_back(NodeToJson(c));
  j["children"] = std::move(children);
  return j;
}

}  // namespace

ParsedHierarchy ParseHierarchy(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("hierarchy is not valid JSON: ") + e.what());
  }
  const json* node = &doc;
  if (doc.is_object() && doc.contains("activity")) {
    const json& act = doc["activity"];
    if (!act.is_object() || !act.contains("root")) throw ParseError("activity: missing \"root\"");
    node = &act["root"];
  } else if (doc.is_object() && doc.contains("root")) {
    node = &doc["root"];
  }
  ParseContext ctx;
  auto root = ParseNode(*node, "root", "0", ctx);
  if (!root) throw ParseError("root: empty or inverted bounds");
  for (const auto& w : ctx.warnings) logger().warn("hierarchy {}", w);
  return {std::move(*root), std::move(ctx.warnings)};
}

ParsedHierarchy ReadHierarchy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open hierarchy " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return ParseHierarchy(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string SerializeHierarchy(const ViewElement& root) {
  json doc;
  doc["activity"]["root"] = NodeToJson(root);
  return doc.dump();
}

std::vector<Rect> DefaultExcludedZones(const Rect& rb) {
  const int band = static_cast<int>(std::lround(rb.height * 0.05));
  if (band <= 0) return {};
  return {{rb.x, rb.y, rb.width, band}, {rb.x, rb.bottom() - band, rb.width, band}};
}

ScreenRecord MakeScreen(std::string screen_id, Image screenshot, ViewElement root) {
  ScreenRecord s;
  s.screen_id = std::move(screen_id);
  s.screenshot = std::move(screenshot);
  s.excluded_zones = DefaultExcludedZones(root.bounds);
  s.root = std::move(root);
  return s;
}

void ForEachElement(const ViewElement& root,
                    const std::function<void(const ViewElement&)>& fn) {
  fn(root);
  for (const auto& c : root.children) ForEachElement(c, fn);
}

const ViewElement* FindElement(const ViewElement& root, std::string_view id) {
  if (root.id == id) return &root;
  for (const auto& c : root.children) {
    if (const auto* found = FindElement(c, id)) return found;
  }
  return nullptr;
}

std::size_t CountElements(const ViewElement& root) {
  std::size_t n = 0;
  ForEachElement(root, [&](const ViewElement&) { ++n; });
  return n;
}

std::string SubtreeText(const ViewElement& element) {
  std::string out;
  ForEachElement(element, [&](const ViewElement& e) {
    if (e.text && !e.text->empty()) {
      if (!out.empty()) out += ' ';
      out += *e.text;
    }
  });
  return out;
}

namespace {

void CollectCandidates(const ViewElement& e, const ViewElement* topmost_clickable,
                       std::set<const ViewElement*>& clickable,
                       std::vector<const ViewElement*>& non_clickable) {
  if (topmost_clickable == nullptr && e.clickable) topmost_clickable = &e;
  if (e.is_leaf()) {
    if (topmost_clickable != nullptr) {
      clickable.insert(topmost_clickable);
    } else {
      non_clickable.push_back(&e);
    }
    return;
  }
  for (const auto& c : e.children) CollectCandidates(c, topmost_clickable, clickable, non_clickable);
}

std::vector<const ViewElement*> Sample(std::vector<const ViewElement*> candidates,
                                       std::size_t limit, nn::RngStream& rng) {
  std::sort(candidates.begin(), candidates.end(),
            [](const ViewElement* a, const ViewElement* b) { return a->id < b->id; });
  const std::size_t k = std::min(limit, candidates.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.Below(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(k);
  return candidates;
}

}  // namespace

std::vector<const ViewElement*> SelectElements(const ScreenRecord& screen, nn::RngStream& rng,
                                               SelectionLimits limits) {
  std::set<const ViewElement*> clickable_set;
  std::vector<const ViewElement*> non_clickable;
  CollectCandidates(screen.root, nullptr, clickable_set, non_clickable);

  auto allowed = [&](const ViewElement* e) {
    return std::none_of(screen.excluded_zones.begin(), screen.excluded_zones.end(),
                        [&](const Rect& z) { return z.Intersects(e->bounds); });
  };
  std::vector<const ViewElement*> clickable;
  std::copy_if(clickable_set.begin(), clickable_set.end(), std::back_inserter(clickable), allowed);
  std::erase_if(non_clickable, [&](const ViewElement* e) { return !allowed(e); });

  const auto chosen_clickable = Sample(std::move(clickable), limits.max_clickable, rng);
  const auto chosen_plain = Sample(std::move(non_clickable), limits.max_non_clickable, rng);
  const std::set<const ViewElement*> chosen(chosen_clickable.begin(), chosen_clickable.end());
  std::set<const ViewElement*> all = chosen;
  all.insert(chosen_plain.begin(), chosen_plain.end());

  std::vector<const ViewElement*> ordered;
  ForEachElement(screen.root, [&](const ViewElement& e) {
    if (all.count(&e)) ordered.push_back(&e);
  });
  return ordered;
}

}  // namespace tapkit
