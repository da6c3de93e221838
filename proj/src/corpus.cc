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

#include "tapkit/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "tapkit/errors.h"

namespace tapkit {

using nlohmann::json;

int RatingSet::tappable_votes() const {
  int n = 0;
  for (const int r : ratings) n += r;
  return n;
}

const ScreenRecord& Corpus::screen(const std::string& screen_id) const {
  const auto it = screens.find(screen_id);
  if (it == screens.end()) throw DataError("unknown screen \"" + screen_id + "\"");
  return it->second;
}

const ViewElement& Corpus::element(const LabeledExample& example) const {
  const ViewElement* e = FindElement(screen(example.screen_id).root, example.element_id);
  if (e == nullptr) {
    throw DataError("screen \"" + example.screen_id + "\" has no element \"" +
                    example.element_id + "\"");
  }
  return *e;
}

void Corpus::Validate() const {
  for (const auto& ex : examples) {
    element(ex);
    if ((ex.human_label != 0 && ex.human_label != 1) || (ex.clickable != 0 && ex.clickable != 1)) {
      throw DataError("labels must be 0 or 1 (" + ex.screen_id + "/" + ex.element_id + ")");
    }
  }
}

Corpus Corpus::Subset(const std::vector<std::size_t>& indices) const {
  Corpus out;
  out.metadata = metadata;
  for (const std::size_t i : indices) {
    const LabeledExample& ex = examples.at(i);
    out.examples.push_back(ex);
    if (!out.screens.count(ex.screen_id)) out.screens.emplace(ex.screen_id, screen(ex.screen_id));
  }
  return out;
}

std::vector<RatingSet> GroupRatings(const std::vector<LabeledExample>& examples) {
  std::vector<RatingSet> sets;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& ex : examples) {
    const auto key = std::make_pair(ex.screen_id, ex.element_id);
    auto [it, inserted] = index.emplace(key, sets.size());
    if (inserted) sets.push_back({ex.screen_id, ex.element_id, {}, {}});
    RatingSet& set = sets[it->second];
    if (std::find(set.workers.begin(), set.workers.end(), ex.worker_id) != set.workers.end()) {
      throw DataError("worker \"" + ex.worker_id + "\" rated " + ex.screen_id + "/" +
                      ex.element_id + " twice");
    }
    set.ratings.push_back(ex.human_label);
    set.workers.push_back(ex.worker_id);
  }
  return sets;
}

// ---------------------------------------------------------------------------

namespace {

json ExampleToJson(const LabeledExample& ex) {
  json j = json::object();
  j["screen_id"] = ex.screen_id;
  j["element_id"] = ex.element_id;
  j["human_label"] = ex.human_label;
  j["clickable"] = ex.clickable;
  j["worker_id"] = ex.worker_id;
  return j;
}

template <class T>
T Field(const json& j, const char* name, const std::string& where) {
  const auto it = j.find(name);
  if (it == j.end()) throw ParseError(where + ": missing field \"" + name + "\"");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": field \"" + name + "\" has the wrong type");
  }
}

int BinaryField(const json& j, const char* name, const std::string& where) {
  const auto it = j.find(name);
  if (it != j.end() && it->is_boolean()) return it->get<bool>() ? 1 : 0;
  const int v = Field<int>(j, name, where);
  if (v != 0 && v != 1) throw ParseError(where + ": field \"" + name + "\" must be 0 or 1");
  return v;
}

std::string SafeFileStem(const std::string& screen_id) {
  std::string s;
  for (const char c : screen_id) {
    s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  }
  return s;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string ExamplesToJsonl(const std::vector<LabeledExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += ExampleToJson(ex).dump();
    out += '\n';
  }
  return out;
}

std::vector<LabeledExample> ExamplesFromJsonl(std::istream& in, const std::string& source) {
  std::vector<LabeledExample> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw ParseError(where + ": line is not valid JSON");
    }
    if (!j.is_object()) throw ParseError(where + ": record must be an object");
    LabeledExample ex;
    ex.screen_id = Field<std::string>(j, "screen_id", where);
    ex.element_id = Field<std::string>(j, "element_id", where);
    ex.human_label = BinaryField(j, "human_label", where);
    ex.clickable = BinaryField(j, "clickable", where);
    ex.worker_id = Field<std::string>(j, "worker_id", where);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LabeledExample> ReadRatingsFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings " + path.string());
  std::vector<LabeledExample> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw ParseError(where + ": line is not valid JSON");
    }
    LabeledExample ex;
    ex.screen_id = Field<std::string>(j, "screen_id", where);
    ex.element_id = Field<std::string>(j, "element_id", where);
    ex.worker_id = Field<std::string>(j, "worker_id", where);
    ex.human_label = BinaryField(j, "label", where);
    if (j.contains("clickable")) ex.clickable = BinaryField(j, "clickable", where);
    out.push_back(std::move(ex));
  }
  return out;
}

void SaveCorpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "screens");
  json manifest = json::object();
  manifest["format"] = "tapkit-corpus";
  manifest["version"] = kCorpusFormatVersion;
  manifest["metadata"] = corpus.metadata;
  json screens = json::array();
  std::set<std::string> stems;
  for (const auto& [id, screen] : corpus.screens) {
    std::string stem = SafeFileStem(id);
    while (!stems.insert(stem).second) stem += "_";
    const std::string png = "screens/" + stem + ".png";
    const std::string hier = "screens/" + stem + ".json";
    WritePng(dir / png, screen.screenshot);
    WriteText(dir / hier, SerializeHierarchy(screen.root));
    json zones = json::array();
    for (const Rect& z : screen.excluded_zones) zones.push_back({z.x, z.y, z.width, z.height});
    json entry = json::object();
    entry["screen_id"] = id;
    entry["screenshot"] = png;
    entry["hierarchy"] = hier;
    entry["excluded_zones"] = std::move(zones);
    screens.push_back(std::move(entry));
  }
  manifest["screens"] = std::move(screens);
  WriteText(dir / "manifest.json", manifest.dump(2) + "\n");
  WriteText(dir / "examples.jsonl", ExamplesToJsonl(corpus.examples));
}

Corpus LoadCorpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::parse_error& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "tapkit-corpus") {
    throw DataError((dir / "manifest.json").string() + ": not a tapkit corpus");
  }
  const int version = manifest.value("version", -1);
  if (version != kCorpusFormatVersion) {
    throw DataError("corpus format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCorpusFormatVersion) + ")");
  }
  Corpus corpus;
  corpus.metadata = manifest.value("metadata", json::object());
  for (const json& entry : manifest.at("screens")) {
    const std::string id = entry.at("screen_id").get<std::string>();
    const fs::path png = dir / entry.at("screenshot").get<std::string>();
    const fs::path hier = dir / entry.at("hierarchy").get<std::string>();
    if (!fs::exists(png)) throw DataError("missing screen asset " + png.string());
    if (!fs::exists(hier)) throw DataError("missing screen asset " + hier.string());
    ScreenRecord s;
    s.screen_id = id;
    s.screenshot = ReadPng(png);
    s.root = ReadHierarchy(hier).root;
    for (const json& z : entry.at("excluded_zones")) {
      s.excluded_zones.push_back({z.at(0).get<int>(), z.at(1).get<int>(), z.at(2).get<int>(),
                                  z.at(3).get<int>()});
    }
    corpus.screens.emplace(id, std::move(s));
  }
  std::ifstream ex(dir / "examples.jsonl");
  if (!ex) throw DataError("missing examples.jsonl in " + dir.string());
  corpus.examples = ExamplesFromJsonl(ex, (dir / "examples.jsonl").string());
  corpus.Validate();
  return corpus;
}

}  // namespace tapkit
