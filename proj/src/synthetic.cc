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

#include "tapkit/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "tapkit/errors.h"
#include "tapkit/nn/rng.h"

namespace tapkit {

using nn::RngStream;

namespace {

constexpr int kRows = 8;
constexpr int kCols = 2;
constexpr std::array<std::uint8_t, 3> kBlue{33, 99, 230};
constexpr std::array<std::uint8_t, 3> kGray{158, 158, 158};

// Class and text follow the element's color, the way action buttons differ
// from content in real apps. They carry no information about position.
const char* const kActionClasses[] = {"android.widget.Button", "android.widget.ImageButton"};
const char* const kContentClasses[] = {"android.widget.TextView", "android.widget.ImageView",
                                       "android.view.View"};
const char* const kActionWords[] = {"buy", "next", "login", "share"};
const char* const kContentWords[] = {"news", "today", "price", "about"};

struct Grid {
  int top;
  int row_h;
  int col_w;
};

Grid GridFor(int width, int height) {
  const int band = static_cast<int>(std::lround(height * 0.05));
  return {band, (height - 2 * band) / kRows, width / kCols};
}

std::string Id(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, n);
  return buf;
}

std::uint8_t Jitter(std::uint8_t base, int delta) {
  return static_cast<std::uint8_t>(std::clamp(static_cast<int>(base) + delta, 0, 255));
}

std::array<std::uint8_t, 3> Blend(double t, RngStream& rng) {
  const int j = static_cast<int>(rng.Below(25)) - 12;
  std::array<std::uint8_t, 3> c{};
  for (int i = 0; i < 3; ++i) {
    const double v = kGray[i] * (1.0 - t) + kBlue[i] * t;
    c[i] = Jitter(static_cast<std::uint8_t>(std::lround(v)), t == 0.0 ? j : j / 2);
  }
  return c;
}

struct Placed {
  int slot;
  double blend;  // 0 = gray, 1 = blue
};

// Rect for an element in a grid slot, sized randomly inside it.
Rect PlaceInSlot(const Grid& g, int slot, RngStream& rng) {
  const int row = slot / kCols, col = slot % kCols;
  const int min_w = g.col_w * 45 / 100, max_w = g.col_w * 93 / 100;
  const int min_h = g.row_h * 55 / 100, max_h = g.row_h * 85 / 100;
  const int w = min_w + static_cast<int>(rng.Below(max_w - min_w + 1));
  const int h = min_h + static_cast<int>(rng.Below(max_h - min_h + 1));
  const int x = col * g.col_w + static_cast<int>(rng.Below(g.col_w - w + 1));
  const int y = g.top + row * g.row_h + static_cast<int>(rng.Below(g.row_h - h + 1));
  return {x, y, w, h};
}

struct ElementSpec {
  Rect bounds;
  double blend;
  bool clickable;
};

ScreenRecord RenderScreen(const std::string& screen_id, int width, int height,
                          const std::vector<ElementSpec>& specs, RngStream& rng) {
  const auto bg = static_cast<std::uint8_t>(238 + rng.Below(13));
  Image img(width, height, {bg, bg, bg});
  ViewElement root;
  root.id = "root";
  root.class_name = "android.widget.FrameLayout";
  root.bounds = {0, 0, width, height};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    img.FillRect(s.bounds, Blend(s.blend, rng));
    ViewElement e;
    e.id = Id("e", i);
    e.bounds = s.bounds;
    e.clickable = s.clickable;
    if (s.blend > 0.5) {
      e.class_name = kActionClasses[rng.Below(std::size(kActionClasses))];
      e.text = kActionWords[rng.Below(std::size(kActionWords))];
    } else {
      e.class_name = kContentClasses[rng.Below(std::size(kContentClasses))];
      if (rng.Bernoulli(0.5)) e.text = kContentWords[rng.Below(std::size(kContentWords))];
    }
    root.children.push_back(std::move(e));
  }
  return MakeScreen(screen_id, std::move(img), std::move(root));
}

// Assigns each wanted label a free (slot, color) pair consistent with the
// planted rule. Returns false when the greedy draw paints itself into a
// corner; the caller redraws.
bool AssignSlots(const std::vector<int>& labels, const PlantedRule& rule, const Grid& g,
                 int height, RngStream& rng, std::vector<Placed>& out) {
  std::vector<bool> used(kRows * kCols, false);
  out.assign(labels.size(), {});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<Placed> options;
    for (int slot = 0; slot < kRows * kCols; ++slot) {
      if (used[slot]) continue;
      const int row = slot / kCols;
      const double center = (g.top + row * g.row_h + g.row_h / 2.0) / height;
      for (const double blend : {0.0, 1.0}) {
        if (rule.Tappable(blend == 1.0, center) == (labels[i] == 1)) options.push_back({slot, blend});
      }
    }
    if (options.empty()) return false;
    out[i] = options[rng.Below(options.size())];
    used[out[i].slot] = true;
  }
  return true;
}

}  // namespace

PlantedRule PlantedRuleFor(int height) {
  const Grid g = GridFor(1, height);
  return {static_cast<double>(g.top + 2 * g.row_h) / height,
          static_cast<double>(g.top + 6 * g.row_h) / height};
}

const std::vector<std::string>& SyntheticWords() {
  static const std::vector<std::string> words{
      "login",  "sign",  "in",      "settings", "more",    "share", "about", "terms",
      "privacy", "welcome", "news", "today",    "price",   "total", "search", "home",
      "profile", "cart",  "buy",    "now",      "read",    "the",   "of",    "and",
      "your",   "account", "help",  "next",     "back",    "menu"};
  return words;
}

EmbeddingTable SyntheticEmbeddings(std::uint64_t seed) {
  RngStream rng = RngStream(seed).Split("embeddings");
  EmbeddingTable table;
  for (const auto& w : SyntheticWords()) {
    WordVector v{};
    for (float& f : v) f = static_cast<float>(std::round(rng.Uniform(-1.0, 1.0) * 1e4) / 1e4);
    table.Add(w, v);
  }
  return EmbeddingTable::Parse(table.Serialize());
}

Corpus GenerateSynthetic(const SyntheticOptions& options) {
  if (options.n_screens < 1) throw ContractViolation("need at least one screen");
  if (options.width > options.height) throw ContractViolation("synthetic screens are portrait");
  const Grid g = GridFor(options.width, options.height);
  const PlantedRule rule = PlantedRuleFor(options.height);
  const RngStream root_rng(options.seed);
  Corpus corpus;
  for (std::size_t s = 0; s < options.n_screens; ++s) {
    RngStream rng = root_rng.Split(s);
    const std::string screen_id = Id("screen-", s);
    std::vector<int> clickable(10);
    for (int i = 0; i < 10; ++i) clickable[i] = i < 5 ? 1 : 0;
    rng.Shuffle(clickable.begin(), clickable.end());
    std::vector<int> labels(10);
    for (int i = 0; i < 10; ++i) {
      labels[i] = rng.Bernoulli(options.disagreement_rate) ? 1 - clickable[i] : clickable[i];
    }
    std::vector<Placed> placed;
    while (!AssignSlots(labels, rule, g, options.height, rng, placed)) {
    }
    std::vector<ElementSpec> specs;
    for (int i = 0; i < 10; ++i) {
      specs.push_back({PlaceInSlot(g, placed[i].slot, rng), placed[i].blend,
                       clickable[i] == 1});
    }
    ScreenRecord screen = RenderScreen(screen_id, options.width, options.height, specs, rng);
    for (int i = 0; i < 10; ++i) {
      corpus.examples.push_back({screen_id, screen.root.children[i].id, labels[i], clickable[i],
                                 "synth-worker"});
    }
    corpus.screens.emplace(screen_id, std::move(screen));
  }
  corpus.metadata = {
      {"generator", "planted-rule"},
      {"seed", options.seed},
      {"n_screens", options.n_screens},
      {"disagreement_rate", options.disagreement_rate},
      {"rule", "tappable iff y_center > blue_threshold for saturated-blue elements, "
               "y_center > gray_threshold for gray elements (y_center normalized by screen height)"},
      {"blue_threshold", rule.blue_threshold},
      {"gray_threshold", rule.gray_threshold},
      {"blue_rgb", {kBlue[0], kBlue[1], kBlue[2]}},
      {"gray_rgb", {kGray[0], kGray[1], kGray[2]}},
      {"text", "blue elements are Button/ImageButton with one action word; gray elements are "
               "TextView/ImageView/View with at most one content word"},
  };
  return corpus;
}

Corpus GenerateConsistencySynthetic(const ConsistencyOptions& options) {
  if (options.n_screens < 1 || options.raters < 1) throw ContractViolation("empty consistency corpus");
  const Grid g = GridFor(options.width, options.height);
  const RngStream root_rng(options.seed);
  constexpr std::array<double, 6> kLevels{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  Corpus corpus;
  for (std::size_t s = 0; s < options.n_screens; ++s) {
    RngStream rng = root_rng.Split(s);
    const std::string screen_id = Id("cscreen-", s);
    std::vector<int> slots(kRows * kCols);
    for (int i = 0; i < kRows * kCols; ++i) slots[i] = i;
    rng.Shuffle(slots.begin(), slots.end());
    std::vector<ElementSpec> specs;
    std::vector<double> levels;
    for (int i = 0; i < 10; ++i) {
      const double t = kLevels[(i < 5 ? 3 : 0) + rng.Below(3)];
      levels.push_back(t);
      specs.push_back({PlaceInSlot(g, slots[i], rng), t, t > 0.5});
    }
    ScreenRecord screen = RenderScreen(screen_id, options.width, options.height, specs, rng);
    for (int i = 0; i < 10; ++i) {
      for (std::size_t r = 0; r < options.raters; ++r) {
        corpus.examples.push_back({screen_id, screen.root.children[i].id,
                                   rng.Bernoulli(levels[i]) ? 1 : 0, levels[i] > 0.5 ? 1 : 0,
                                   Id("worker-", r)});
      }
    }
    corpus.screens.emplace(screen_id, std::move(screen));
  }
  corpus.metadata = {
      {"generator", "graded-consistency"},
      {"seed", options.seed},
      {"n_screens", options.n_screens},
      {"raters", options.raters},
      {"rule", "each rater labels tappable with probability t, the blue blend level of the element"},
  };
  return corpus;
}

}  // namespace tapkit
