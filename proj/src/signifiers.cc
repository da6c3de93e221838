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

#include "tapkit/signifiers.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tapkit/errors.h"
#include "tapkit/log.h"
#include "tapkit/nn/rng.h"

namespace tapkit {

using nlohmann::json;

const char* PolarityName(Polarity p) {
  return p == Polarity::kTappable ? "tappable" : "not_tappable";
}

namespace {

void RequireNonempty(const Corpus& corpus, const char* what) {
  if (corpus.examples.empty()) throw ContractViolation(std::string(what) + " needs a nonempty corpus");
}

NormalizedBox BoxOf(const ScreenRecord& screen, const ViewElement& element) {
  const Rect& root = screen.root.bounds;
  Rect rel = element.bounds.Intersect(root);
  rel.x -= root.x;
  rel.y -= root.y;
  return EncodeBbox(rel, root.width, root.height);
}

ValueSummary Summary(std::vector<double> v) {
  ValueSummary s;
  s.n = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  for (const double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  s.median = v.size() % 2 ? v[h] : (v[h - 1] + v[h]) / 2.0;
  return s;
}

std::optional<double> Ratio(const ValueSummary& num, const ValueSummary& den, double ValueSummary::*field) {
  if (num.n == 0 || den.n == 0 || den.*field == 0.0) return std::nullopt;
  return num.*field / den.*field;
}

json SummaryJson(const ValueSummary& s) { return {{"n", s.n}, {"mean", s.mean}, {"median", s.median}}; }

json Optional(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// First cell index whose center (i + 0.5) / n is >= v.
int FirstCenterAtOrAfter(double v, int n) {
  int i = std::clamp(static_cast<int>(std::ceil(v * n - 0.5)), 0, n);
  while (i > 0 && (i - 1 + 0.5) / n >= v) --i;
  while (i < n && (i + 0.5) / n < v) ++i;
  return i;
}

}  // namespace

std::optional<double> ClassAccuracy::accuracy() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<TypeAccuracy> AccuracyByType(const Corpus& corpus, const TypeVocabulary& types) {
  RequireNonempty(corpus, "accuracy_by_type");
  std::vector<TypeAccuracy> rows(types.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].type = types.names()[i];
  for (const auto& ex : corpus.examples) {
    const ViewElement& el = corpus.element(ex);
    TypeAccuracy& row = rows[types.Index(el.class_name)];
    ClassAccuracy& c = ex.clickable ? row.tappable : row.not_tappable;
    ++c.total;
    c.correct += ex.human_label == ex.clickable;
  }
  std::erase_if(rows, [](const TypeAccuracy& r) { return r.tappable.total + r.not_tappable.total == 0; });
  return rows;
}

HeatmapGrid::HeatmapGrid()
    : correct_(static_cast<std::size_t>(kWidth) * kHeight), total_(correct_.size()) {}

std::size_t HeatmapGrid::Index(int x, int y) {
  if (x < 0 || x >= kWidth || y < 0 || y >= kHeight) throw ContractViolation("heatmap cell out of range");
  return static_cast<std::size_t>(y) * kWidth + static_cast<std::size_t>(x);
}

void HeatmapGrid::Add(const NormalizedBox& box, bool correct) {
  const int x0 = FirstCenterAtOrAfter(box.x, kWidth), x1 = FirstCenterAtOrAfter(box.x + box.w, kWidth);
  const int y0 = FirstCenterAtOrAfter(box.y, kHeight), y1 = FirstCenterAtOrAfter(box.y + box.h, kHeight);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const std::size_t i = Index(x, y);
      ++total_[i];
      correct_[i] += correct;
    }
  }
}

std::optional<double> HeatmapGrid::accuracy(int x, int y) const {
  const std::size_t i = Index(x, y);
  if (total_[i] == 0) return std::nullopt;
  return static_cast<double>(correct_[i]) / static_cast<double>(total_[i]);
}

json HeatmapGrid::ToJson() const {
  json c = json::array(), t = json::array();
  for (int y = 0; y < kHeight; ++y) {
    const auto begin = static_cast<std::ptrdiff_t>(y) * kWidth;
    c.push_back(std::vector<std::uint32_t>(correct_.begin() + begin, correct_.begin() + begin + kWidth));
    t.push_back(std::vector<std::uint32_t>(total_.begin() + begin, total_.begin() + begin + kWidth));
  }
  return {{"width", kWidth}, {"height", kHeight}, {"correct", std::move(c)}, {"total", std::move(t)}};
}

HeatmapGrid LocationHeatmap(const Corpus& corpus, Polarity cls) {
  HeatmapGrid grid;
  for (const auto& ex : corpus.examples) {
    if (ex.clickable != static_cast<int>(cls)) continue;
    grid.Add(BoxOf(corpus.screen(ex.screen_id), corpus.element(ex)), ex.human_label == ex.clickable);
  }
  return grid;
}

std::optional<double> SizeStats::mislabeled_to_labeled_mean_ratio() const {
  return Ratio(clickable_labeled_not_tappable, clickable_labeled_tappable, &ValueSummary::mean);
}

std::optional<double> SizeStats::type_mean_ratio(const std::string& type) const {
  const auto it = by_type.find(type);
  if (it == by_type.end()) return std::nullopt;
  return Ratio(it->second[0], it->second[1], &ValueSummary::mean);
}

std::optional<double> SizeStats::type_median_ratio(const std::string& type) const {
  const auto it = by_type.find(type);
  if (it == by_type.end()) return std::nullopt;
  return Ratio(it->second[0], it->second[1], &ValueSummary::median);
}

json SizeStats::ToJson() const {
  json types = json::object();
  for (const auto& [name, s] : by_type) {
    types[name] = {{"not_tappable", SummaryJson(s[0])},
                   {"tappable", SummaryJson(s[1])},
                   {"mean_ratio", Optional(type_mean_ratio(name))},
                   {"median_ratio", Optional(type_median_ratio(name))}};
  }
  return {{"tappable", SummaryJson(tappable)},
          {"not_tappable", SummaryJson(not_tappable)},
          {"clickable_labeled_tappable", SummaryJson(clickable_labeled_tappable)},
          {"clickable_labeled_not_tappable", SummaryJson(clickable_labeled_not_tappable)},
          {"mislabeled_to_labeled_mean_ratio", Optional(mislabeled_to_labeled_mean_ratio())},
          {"by_type", std::move(types)}};
}

SizeStats ComputeSizeStats(const Corpus& corpus, const TypeVocabulary& types) {
  RequireNonempty(corpus, "size_stats");
  std::vector<double> by_label[2], clickable_by_label[2];
  std::map<std::string, std::array<std::vector<double>, 2>> by_type;
  for (const auto& ex : corpus.examples) {
    const ViewElement& el = corpus.element(ex);
    const NormalizedBox b = BoxOf(corpus.screen(ex.screen_id), el);
    const double area = b.w * b.h;
    const int label = ex.human_label == 1;
    by_label[label].push_back(area);
    if (ex.clickable) clickable_by_label[label].push_back(area);
    by_type[types.names()[types.Index(el.class_name)]][label].push_back(area);
  }
  SizeStats s;
  s.not_tappable = Summary(by_label[0]);
  s.tappable = Summary(by_label[1]);
  s.clickable_labeled_not_tappable = Summary(clickable_by_label[0]);
  s.clickable_labeled_tappable = Summary(clickable_by_label[1]);
  for (auto& [name, v] : by_type) s.by_type[name] = {Summary(std::move(v[0])), Summary(std::move(v[1]))};
  return s;
}

json ColorPalette::ToJson() const {
  json out = json::array();
  for (const auto& e : entries) out.push_back({{"rgb", e.color}, {"proportion", e.proportion}});
  return out;
}

namespace {

double Dist2(const Rgb& a, const Rgb& b) {
  const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return d0 * d0 + d1 * d1 + d2 * d2;
}

std::size_t Nearest(const Rgb& p, const std::vector<Rgb>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = Dist2(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

ColorPalette KMeansPalette(const std::vector<Rgb>& points, const KMeansOptions& options) {
  if (points.empty()) throw ContractViolation("k-means needs at least one point");
  if (options.k < 1) throw ContractViolation("k-means needs k >= 1");
  // Distinct points with multiplicities, in sorted order.
  std::vector<Rgb> sorted = points;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Rgb> uniq;
  std::vector<double> weight;
  for (const Rgb& p : sorted) {
    if (uniq.empty() || uniq.back() != p) {
      uniq.push_back(p);
      weight.push_back(0.0);
    }
    weight.back() += 1.0;
  }
  std::size_t k = options.k;
  if (uniq.size() < k) {
    logger().warn("only {} distinct colors; reducing k from {} to {}", uniq.size(), k, uniq.size());
    k = uniq.size();
  }

  nn::RngStream rng = nn::RngStream(options.seed).Split("kmeans++");
  auto weighted_pick = [&](const std::vector<double>& w) {
    double total = 0.0;
    for (const double x : w) total += x;
    const double r = rng.Uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (r < acc && w[i] > 0.0) return i;
    }
    for (std::size_t i = w.size(); i-- > 0;) {
      if (w[i] > 0.0) return i;
    }
    return std::size_t{0};
  };

  std::vector<Rgb> centroids{uniq[weighted_pick(weight)]};
  std::vector<double> d2(uniq.size());
  while (centroids.size() < k) {
    for (std::size_t i = 0; i < uniq.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Rgb& c : centroids) best = std::min(best, Dist2(uniq[i], c));
      d2[i] = best * weight[i];
    }
    centroids.push_back(uniq[weighted_pick(d2)]);
  }

  std::vector<std::size_t> assign(uniq.size());
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    for (std::size_t i = 0; i < uniq.size(); ++i) assign[i] = Nearest(uniq[i], centroids);
    std::vector<Rgb> sum(k, Rgb{0, 0, 0});
    std::vector<double> mass(k, 0.0);
    for (std::size_t i = 0; i < uniq.size(); ++i) {
      for (int c = 0; c < 3; ++c) sum[assign[i]][c] += weight[i] * uniq[i][c];
      mass[assign[i]] += weight[i];
    }
    double moved = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (mass[c] == 0.0) continue;  // empty cluster keeps its centroid
      const Rgb next{sum[c][0] / mass[c], sum[c][1] / mass[c], sum[c][2] / mass[c]};
      moved = std::max(moved, std::sqrt(Dist2(next, centroids[c])));
      centroids[c] = next;
    }
    if (moved < options.tolerance) break;
  }
  for (std::size_t i = 0; i < uniq.size(); ++i) assign[i] = Nearest(uniq[i], centroids);

  std::vector<double> mass(k, 0.0);
  for (std::size_t i = 0; i < uniq.size(); ++i) mass[assign[i]] += weight[i];
  ColorPalette palette;
  for (std::size_t c = 0; c < k; ++c) {
    palette.entries.push_back({centroids[c], mass[c] / static_cast<double>(points.size())});
  }
  std::sort(palette.entries.begin(), palette.entries.end(), [](const PaletteEntry& a, const PaletteEntry& b) {
    if (a.proportion != b.proportion) return a.proportion > b.proportion;
    return a.color < b.color;
  });
  return palette;
}

ColorPalette DominantColors(const Corpus& corpus, Polarity cls, std::size_t k, std::uint64_t seed,
                            std::size_t samples_per_element) {
  const nn::RngStream root = nn::RngStream(seed).Split("dominant-colors");
  std::vector<Rgb> samples;
  for (const auto& ex : corpus.examples) {
    if (ex.human_label != static_cast<int>(cls)) continue;
    const ScreenRecord& screen = corpus.screen(ex.screen_id);
    const Rect r = screen.ToPixels(corpus.element(ex).bounds)
                       .Intersect({0, 0, screen.screenshot.width, screen.screenshot.height});
    if (r.empty()) continue;
    nn::RngStream rng = root.Split(ex.screen_id + '\x1f' + ex.element_id);
    for (std::size_t s = 0; s < samples_per_element; ++s) {
      const int x = r.x + static_cast<int>(rng.Below(static_cast<std::uint64_t>(r.width)));
      const int y = r.y + static_cast<int>(rng.Below(static_cast<std::uint64_t>(r.height)));
      const std::uint8_t* p = screen.screenshot.pixel(x, y);
      samples.push_back({p[0] / 255.0, p[1] / 255.0, p[2] / 255.0});
    }
  }
  if (samples.empty()) throw DataError(std::string("no ") + PolarityName(cls) + " pixels to cluster");
  return KMeansPalette(samples, {.k = k, .seed = seed});
}

TfIdfScores ComputeTfIdf(const std::vector<std::string>& doc_a, const std::vector<std::string>& doc_b) {
  std::map<std::string, double> ca, cb;
  for (const auto& t : doc_a) ca[t] += 1.0;
  for (const auto& t : doc_b) cb[t] += 1.0;
  auto score = [](const std::map<std::string, double>& self, const std::map<std::string, double>& other,
                  std::size_t len) {
    std::map<std::string, double> out;
    for (const auto& [term, count] : self) {
      const double df = other.count(term) ? 2.0 : 1.0;
      out[term] = count / static_cast<double>(len) * std::log(2.0 / df);
    }
    return out;
  };
  return {score(ca, cb, doc_a.size()), score(cb, ca, doc_b.size())};
}

KeywordLists TfIdfKeywords(const std::vector<std::string>& doc_a, const std::vector<std::string>& doc_b,
                           std::size_t top_n) {
  if (doc_a.empty() || doc_b.empty()) throw ContractViolation("TF-IDF needs two nonempty documents");
  const TfIdfScores s = ComputeTfIdf(doc_a, doc_b);
  auto top = [top_n](const std::map<std::string, double>& scores) {
    std::vector<Keyword> kw;
    for (const auto& [term, score] : scores) {
      if (score > 0.0) kw.push_back({term, score});
    }
    // Map order is alphabetical, so a stable sort by score keeps ties in it.
    std::stable_sort(kw.begin(), kw.end(), [](const Keyword& a, const Keyword& b) { return a.score > b.score; });
    if (kw.size() > top_n) kw.resize(top_n);
    return kw;
  };
  return {top(s.a), top(s.b)};
}

LabelDocuments DocumentsByLabel(const Corpus& corpus) {
  LabelDocuments docs;
  for (const auto& ex : corpus.examples) {
    auto tokens = Tokenize(SubtreeText(corpus.element(ex)));
    auto& doc = ex.human_label == 1 ? docs.tappable : docs.not_tappable;
    doc.insert(doc.end(), std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end()));
  }
  return docs;
}

std::optional<double> WordCountStats::mean_ratio() const {
  return Ratio(not_tappable, tappable, &ValueSummary::mean);
}

json WordCountStats::ToJson() const {
  return {{"tappable", SummaryJson(tappable)},
          {"not_tappable", SummaryJson(not_tappable)},
          {"mean_ratio", Optional(mean_ratio())}};
}

WordCountStats ComputeWordCountStats(const Corpus& corpus) {
  RequireNonempty(corpus, "word_count_stats");
  std::vector<double> v[2];
  for (const auto& ex : corpus.examples) {
    const std::size_t n = Tokenize(SubtreeText(corpus.element(ex))).size();
    v[ex.human_label == 1].push_back(std::log(static_cast<double>(n) + 1.0));
  }
  WordCountStats s;
  s.not_tappable = Summary(std::move(v[0]));
  s.tappable = Summary(std::move(v[1]));
  return s;
}

}  // namespace tapkit
