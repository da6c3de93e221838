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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "tapkit/corpus.h"
#include "tapkit/dataset.h"
#include "tapkit/errors.h"
#include "tapkit/nn/rng.h"
#include "tapkit/synthetic.h"

using namespace tapkit;
namespace fs = std::filesystem;

namespace {

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tapkit_dataset_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ViewElement Node(std::string id, Rect r, bool clickable, std::vector<ViewElement> kids = {}) {
  ViewElement e;
  e.id = std::move(id);
  e.class_name = "android.view.View";
  e.bounds = r;
  e.clickable = clickable;
  e.children = std::move(kids);
  return e;
}

std::vector<std::string> Ids(const std::vector<const ViewElement*>& v) {
  std::vector<std::string> out;
  for (const auto* e : v) out.push_back(e->id);
  return out;
}

// Independent statement of the selection rule: walk every root-to-leaf path.
void CandidatesOracle(const ViewElement& e, const ViewElement* top_clickable,
                      std::set<std::string>& clickable, std::set<std::string>& plain) {
  const ViewElement* top = top_clickable ? top_clickable : (e.clickable ? &e : nullptr);
  if (e.children.empty()) {
    if (top) clickable.insert(top->id);
    else plain.insert(e.id);
  }
  for (const auto& c : e.children) CandidatesOracle(c, top, clickable, plain);
}

ScreenRecord NestedScreen() {
  // Clickable card containing a clickable button: only the card counts.
  ViewElement root = Node(
      "root", {0, 0, 100, 200}, false,
      {Node("card", {0, 20, 100, 40}, true,
            {Node("btn", {10, 25, 20, 10}, true), Node("label", {40, 25, 20, 10}, false)}),
       Node("text", {0, 70, 100, 20}, false),
       Node("group", {0, 100, 100, 60}, false,
            {Node("a", {0, 100, 50, 20}, true), Node("b", {50, 100, 50, 20}, false)}),
       Node("status", {0, 0, 100, 8}, false), Node("nav", {0, 195, 100, 5}, true)});
  return MakeScreen("s", Image(100, 200), std::move(root));
}

}  // namespace

TEST_CASE("parse hierarchy: wrappers, defaults, warnings") {
  const std::string node =
      R"({"class": "android.widget.FrameLayout", "bounds": [0, 0, 100, 200], "clickable": false,
          "children": [{"class": "android.widget.Button", "bounds": [10, 20, 60, 50],
                        "clickable": true, "text": "OK"},
                       {"class": "android.widget.TextView", "bounds": [0, 60, 100, 80]},
                       {"class": "X", "bounds": [50, 50, 40, 90], "clickable": true}]})";
  for (const std::string& text :
       {R"({"activity": {"root": )" + node + "}}", R"({"root": )" + node + "}", node}) {
    const auto parsed = ParseHierarchy(text);
    const auto& r = parsed.root;
    CHECK(r.id == "0");
    REQUIRE(r.children.size() == 2);
    CHECK(r.children[0].id == "0.0");
    CHECK(r.children[0].bounds == Rect{10, 20, 50, 30});
    CHECK(r.children[0].text == "OK");
    CHECK(r.children[0].clickable);
    CHECK_FALSE(r.children[1].clickable);
    CHECK(parsed.warnings.size() == 2);
  }
}

TEST_CASE("parse hierarchy errors name the node") {
  CHECK_THROWS_AS(ParseHierarchy("{not json"), ParseError);
  try {
    ParseHierarchy(R"({"class": "A", "bounds": [0,0,10,10], "children": [{"class": "B"}]})");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("children[0]") != std::string::npos);
  }
  CHECK_THROWS_AS(ParseHierarchy(R"({"class": "A", "bounds": [0,0,10,10], "id": "x",
                                     "children": [{"class": "B", "bounds": [0,0,5,5], "id": "x"}]})"),
                  ParseError);
}

TEST_CASE("hierarchy serialization round trips") {
  const auto screen = NestedScreen();
  const std::string text = SerializeHierarchy(screen.root);
  const auto parsed = ParseHierarchy(text);
  CHECK(parsed.root == screen.root);
  CHECK(SerializeHierarchy(parsed.root) == text);
}

TEST_CASE("selection: nesting, exclusion zones, document order") {
  const auto screen = NestedScreen();
  nn::RngStream rng(1);
  const auto picked = SelectElements(screen, rng);
  // status and nav intersect the 5% bands; btn is inside the clickable card.
  CHECK(Ids(picked) == std::vector<std::string>{"card", "text", "a", "b"});
}

TEST_CASE("selection matches the path oracle on random trees") {
  nn::RngStream rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    int counter = 0;
    std::function<ViewElement(int, Rect)> grow = [&](int depth, Rect r) {
      ViewElement e = Node("n" + std::to_string(counter++), r, rng.Bernoulli(0.3));
      if (depth < 3) {
        const std::size_t k = rng.Below(4);
        for (std::size_t i = 0; i < k; ++i) {
          const int h = std::max(1, r.height / 4);
          e.children.push_back(grow(depth + 1, {r.x, r.y + static_cast<int>(i) * h, r.width, h}));
        }
      }
      return e;
    };
    ViewElement root = grow(0, {0, 0, 400, 800});
    root.clickable = false;
    ScreenRecord screen = MakeScreen("t", Image(400, 800), root);
    screen.excluded_zones.clear();
    std::set<std::string> want_click, want_plain;
    CandidatesOracle(screen.root, nullptr, want_click, want_plain);
    nn::RngStream pick(trial);
    const auto all = SelectElements(screen, pick, {1000, 1000});
    const auto all_ids = Ids(all);
    std::set<std::string> got(all_ids.begin(), all_ids.end());
    std::set<std::string> want = want_click;
    want.insert(want_plain.begin(), want_plain.end());
    CHECK(got == want);

    // Caps and determinism.
    nn::RngStream r1(trial), r2(trial);
    const auto a = Ids(SelectElements(screen, r1, {2, 3}));
    const auto b = Ids(SelectElements(screen, r2, {2, 3}));
    CHECK(a == b);
    std::size_t nc = 0, np = 0;
    for (const auto& id : a) (want_click.count(id) ? nc : np)++;
    CHECK(nc == std::min<std::size_t>(2, want_click.size()));
    CHECK(np == std::min<std::size_t>(3, want_plain.size()));
  }
}

TEST_CASE("selection is invariant to sibling order") {
  auto screen = NestedScreen();
  nn::RngStream r1(9);
  auto base = Ids(SelectElements(screen, r1, {1, 2}));
  std::sort(base.begin(), base.end());
  std::reverse(screen.root.children.begin(), screen.root.children.end());
  nn::RngStream r2(9);
  auto swapped = Ids(SelectElements(screen, r2, {1, 2}));
  std::sort(swapped.begin(), swapped.end());
  CHECK(base == swapped);
}

TEST_CASE("corpus save/load round trip is lossless and byte-stable") {
  const auto corpus = GenerateSynthetic({.seed = 3, .n_screens = 4});
  const auto d1 = TempDir("a"), d2 = TempDir("b");
  SaveCorpus(corpus, d1);
  const Corpus loaded = LoadCorpus(d1);
  CHECK(loaded == corpus);
  SaveCorpus(loaded, d2);
  for (const auto& entry : fs::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), d1);
    CHECK_MESSAGE(ReadFile(entry.path()) == ReadFile(d2 / rel), rel.string());
  }
}

TEST_CASE("corpus loading reports bad lines and versions") {
  const auto corpus = GenerateSynthetic({.seed = 3, .n_screens = 1});
  const auto dir = TempDir("bad");
  SaveCorpus(corpus, dir);
  {
    std::ofstream out(dir / "examples.jsonl", std::ios::app);
    out << "{\"screen_id\": \"screen-0000\"\n";
  }
  try {
    LoadCorpus(dir);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("examples.jsonl:11") != std::string::npos);
  }

  SaveCorpus(corpus, dir);
  std::string manifest = ReadFile(dir / "manifest.json");
  manifest.replace(manifest.find("\"version\": 1"), 12, "\"version\": 99");
  std::ofstream(dir / "manifest.json") << manifest;
  CHECK_THROWS_AS(LoadCorpus(dir), DataError);

  std::istringstream bad_label(R"({"screen_id":"s","element_id":"e","human_label":2,"clickable":0,"worker_id":"w"})");
  CHECK_THROWS_AS(ExamplesFromJsonl(bad_label, "x"), ParseError);
}

TEST_CASE("group ratings") {
  std::vector<LabeledExample> ex{{"s", "e1", 1, 1, "w1"}, {"s", "e2", 0, 0, "w1"},
                                 {"s", "e1", 0, 1, "w2"}};
  const auto sets = GroupRatings(ex);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].element_id == "e1");
  CHECK(sets[0].ratings == std::vector<int>{1, 0});
  CHECK(sets[0].tappable_votes() == 1);
  ex.push_back({"s", "e1", 1, 1, "w2"});
  CHECK_THROWS_AS(GroupRatings(ex), DataError);
}

TEST_CASE("synthetic corpus: determinism, selection agreement, planted rule, balance") {
  const SyntheticOptions opt{.seed = 21, .n_screens = 30};
  const auto corpus = GenerateSynthetic(opt);
  CHECK(corpus == GenerateSynthetic(opt));
  CHECK(corpus.examples.size() == 300);
  corpus.Validate();

  const PlantedRule rule = PlantedRuleFor(opt.height);
  CHECK(rule.blue_threshold == doctest::Approx(0.275));
  CHECK(rule.gray_threshold == doctest::Approx(0.725));
  int positives = 0;
  for (const auto& [id, screen] : corpus.screens) {
    nn::RngStream rng(0);
    CHECK(SelectElements(screen, rng).size() == 10);
  }
  for (const auto& ex : corpus.examples) {
    const auto& screen = corpus.screen(ex.screen_id);
    const auto& e = corpus.element(ex);
    const auto px = screen.screenshot.pixel(e.bounds.x + e.bounds.width / 2, e.bounds.y + e.bounds.height / 2);
    const bool blue = px[2] > px[0] + 60;
    const double yc = (e.bounds.y + e.bounds.height / 2.0) / opt.height;
    CHECK(rule.Tappable(blue, yc) == (ex.human_label == 1));
    CHECK(ex.clickable == ex.human_label);
    positives += ex.human_label;
  }
  CHECK(positives >= 120);
  CHECK(positives <= 180);

  const auto noisy = GenerateSynthetic({.seed = 21, .n_screens = 100, .disagreement_rate = 0.2});
  int flips = 0;
  for (const auto& ex : noisy.examples) flips += ex.clickable != ex.human_label;
  CHECK(flips > 150);
  CHECK(flips < 250);
}

TEST_CASE("consistency corpus has five raters per element") {
  const auto corpus = GenerateConsistencySynthetic({.seed = 5, .n_screens = 4});
  const auto sets = GroupRatings(corpus.examples);
  CHECK(sets.size() == 40);
  for (const auto& s : sets) CHECK(s.ratings.size() == 5);
  CHECK(corpus == GenerateConsistencySynthetic({.seed = 5, .n_screens = 4}));
}
