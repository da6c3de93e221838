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

#include <filesystem>
#include <future>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "tapkit/errors.h"
#include "tapkit/server.h"
#include "tapkit/synthetic.h"

using namespace tapkit;
using nlohmann::json;

namespace {

struct Fixture {
  Corpus corpus;
  EmbeddingTable embeddings;
  Model model;
};

// A model trained long enough to follow the planted color rule.
const Fixture& Trained() {
  static const Fixture f = [] {
    Fixture x;
    x.corpus = GenerateSynthetic({.seed = 3, .n_screens = 8});
    x.embeddings = SyntheticEmbeddings(3);
    ModelConfig config;
    config.steps = 250;
    config.batch_size = 32;
    x.model = TrainModel(x.corpus, config, x.embeddings, TypeVocabulary::Default());
    return x;
  }();
  return f;
}

std::string Png(const Image& img) {
  const auto bytes = EncodePng(img);
  return {bytes.begin(), bytes.end()};
}

AnalyzeRequest RequestFor(const ScreenRecord& screen, std::optional<std::string> threshold = std::nullopt) {
  AnalyzeRequest r;
  r.screenshot = Png(screen.screenshot);
  r.hierarchy = SerializeHierarchy(screen.root);
  r.threshold = std::move(threshold);
  return r;
}

std::string Reason(const HttpReply& r) { return json::parse(r.body).at("error").get<std::string>(); }

bool IsBlue(const ScreenRecord& s, const ViewElement& el) {
  const Rect r = s.ToPixels(el.bounds);
  const std::uint8_t* p = s.screenshot.pixel(r.x + r.width / 2, r.y + r.height / 2);
  return p[2] > p[0] + 60;
}

}  // namespace

TEST_CASE("health reports loading until the model is set") {
  const auto& f = Trained();
  AnalysisService service(f.embeddings);
  CHECK(service.Health().status == 503);
  CHECK_FALSE(service.ready());
  CHECK(service.Analyze(RequestFor(f.corpus.screens.begin()->second)).status == 503);

  const auto path = std::filesystem::temp_directory_path() / "tapkit_server_test.ckpt";
  SaveCheckpoint(f.model, path);
  service.SetModel(LoadCheckpoint(path));
  const auto h = service.Health();
  CHECK(h.status == 200);
  const auto body = json::parse(h.body);
  CHECK(body["status"] == "ok");
  CHECK(body["model_version"] == ReadCheckpointHeader(path).json.at("model_version"));
  CHECK(body["threshold"] == f.model.threshold);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(service.SetModel(f.model), ContractViolation);
}

TEST_CASE("analyze: malformed payloads") {
  const auto& f = Trained();
  AnalysisService service(f.embeddings);
  service.SetModel(f.model);
  const ScreenRecord& screen = f.corpus.screens.begin()->second;

  auto r = RequestFor(screen);
  r.screenshot.reset();
  auto reply = service.Analyze(r);
  CHECK(reply.status == 400);
  CHECK(Reason(reply).find("screenshot") != std::string::npos);

  r = RequestFor(screen);
  r.hierarchy.reset();
  CHECK(Reason(service.Analyze(r)).find("hierarchy") != std::string::npos);

  r = RequestFor(screen);
  r.screenshot = "not a png";
  reply = service.Analyze(r);
  CHECK(reply.status == 400);
  CHECK(Reason(reply).find("PNG") != std::string::npos);

  r = RequestFor(screen);
  r.hierarchy = R"({"class": "FrameLayout", "bounds": [0, 0, 270, 480], "children": [{"class": 5}]})";
  reply = service.Analyze(r);
  CHECK(reply.status == 400);
  CHECK(Reason(reply).find("children[0]") != std::string::npos);

  r = RequestFor(screen);
  r.hierarchy = "{";
  CHECK(service.Analyze(r).status == 400);

  for (const char* bad : {"0", "1", "-0.2", "1.5", "abc", "0.5x", "", "nan"}) {
    CAPTURE(bad);
    reply = service.Analyze(RequestFor(screen, bad));
    CHECK(reply.status == 400);
    CHECK(Reason(reply).find("threshold") != std::string::npos);
  }

  r = RequestFor(screen);
  r.screenshot = Png(Image(480, 270));
  reply = service.Analyze(r);
  CHECK(reply.status == 422);
  CHECK(Reason(reply).find("landscape") != std::string::npos);

  r = RequestFor(screen);
  r.payload_bytes = (20u << 20) + 1;
  CHECK(service.Analyze(r).status == 413);
}

TEST_CASE("analyze: response contract") {
  const auto& f = Trained();
  AnalysisService service(f.embeddings);
  service.SetModel(f.model);
  const ScreenRecord& screen = f.corpus.screens.begin()->second;

  const auto reply = service.Analyze(RequestFor(screen));
  REQUIRE(reply.status == 200);
  const auto body = json::parse(reply.body);
  CHECK(body["model_version"] == f.model.Version());
  CHECK(body["threshold_used"] == f.model.threshold);
  const auto& els = body["elements"];
  CHECK(els.size() == 10);

  // Document order.
  std::vector<std::string> order;
  ForEachElement(screen.root, [&](const ViewElement& e) { order.push_back(e.id); });
  std::size_t last = 0;
  for (const auto& e : els) {
    const auto pos = std::find(order.begin(), order.end(), e["element_id"].get<std::string>()) - order.begin();
    CHECK(static_cast<std::size_t>(pos) >= last);
    last = static_cast<std::size_t>(pos);
    const double p = e["probability"];
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(e["perceived_tappable"] == (p >= f.model.threshold));
    CHECK(e["mismatch"] == (e["perceived_tappable"] != e["clickable"]));
    for (const char* k : {"x", "y", "width", "height"}) CHECK(e["bounds"].contains(k));
  }

  // Raising the threshold never adds a perceived-tappable element.
  std::size_t previous = els.size() + 1;
  for (int i = 1; i <= 20; ++i) {
    const double t = i / 21.0;
    const auto b = json::parse(service.Analyze(RequestFor(screen, std::to_string(t))).body);
    std::size_t n = 0;
    for (const auto& e : b["elements"]) n += e["perceived_tappable"].get<bool>();
    CHECK(n <= previous);
    previous = n;
  }

  // Identical requests, sequential and concurrent, give identical bodies.
  const auto req = RequestFor(screen, "0.4");
  const std::string first = service.Analyze(req).body;
  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 4; ++i) {
    futures.push_back(std::async(std::launch::async, [&] { return service.Analyze(req).body; }));
  }
  for (auto& fu : futures) CHECK(fu.get() == first);
}

TEST_CASE("analyze: empty hierarchy and planted mismatch") {
  const auto& f = Trained();
  ServiceOptions options;
  options.limits = {20, 20};
  AnalysisService service(f.embeddings, options);
  service.SetModel(f.model);

  AnalyzeRequest empty;
  empty.screenshot = Png(Image(270, 480));
  empty.hierarchy = R"({"class": "FrameLayout", "bounds": [0, 0, 270, 480]})";
  const auto reply = service.Analyze(empty);
  CHECK(reply.status == 200);
  CHECK(json::parse(reply.body)["elements"].empty());

  // A blue element low on the screen is tappable under the planted rule;
  // declaring it non-clickable must be flagged.
  const auto fresh = GenerateSynthetic({.seed = 99, .n_screens = 1});
  ScreenRecord screen = fresh.screens.begin()->second;
  const PlantedRule rule = PlantedRuleFor(screen.root.bounds.height);
  ViewElement* target = nullptr;
  std::function<void(ViewElement&)> visit = [&](ViewElement& e) {
    const double yc = (e.bounds.y + e.bounds.height / 2.0) / screen.root.bounds.height;
    if (!target && e.is_leaf() && e.clickable && IsBlue(screen, e) && rule.Tappable(true, yc) && yc > 0.5) target = &e;
    for (auto& c : e.children) visit(c);
  };
  visit(screen.root);
  REQUIRE(target != nullptr);
  target->clickable = false;
  const std::string id = target->id;
  const auto body = json::parse(service.Analyze(RequestFor(screen)).body);
  bool found = false;
  for (const auto& e : body["elements"]) {
    if (e["element_id"] != id) continue;
    found = true;
    CHECK(e["clickable"] == false);
    CHECK(e["perceived_tappable"] == true);
    CHECK(e["mismatch"] == true);
  }
  CHECK(found);
}

TEST_CASE("http transport") {
  const auto& f = Trained();
  ServiceOptions options;
  options.max_payload_bytes = 1u << 20;
  AnalysisService service(f.embeddings, options);
  HttpServer server(service);
  const int port = server.Start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);

  auto res = cli.Get("/health");
  REQUIRE(res);
  CHECK(res->status == 503);
  service.SetModel(f.model);
  res = cli.Get("/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");

  const ScreenRecord& screen = f.corpus.screens.begin()->second;
  const auto req = RequestFor(screen);
  const httplib::MultipartFormDataItems items{{"screenshot", *req.screenshot, "screen.png", "image/png"},
                                              {"hierarchy", *req.hierarchy, "screen.json", "application/json"}};
  res = cli.Post("/analyze?threshold=0.3", items);
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(res->body == service.Analyze(RequestFor(screen, "0.3")).body);

  res = cli.Post("/analyze", httplib::MultipartFormDataItems{items[0]});
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"].get<std::string>().find("hierarchy") != std::string::npos);

  const httplib::MultipartFormDataItems big{items[0], items[1], {"padding", std::string(2u << 20, 'x'), "", ""}};
  res = cli.Post("/analyze", big);
  REQUIRE(res);
  CHECK(res->status == 413);
  CHECK(json::parse(res->body).contains("error"));

  res = cli.Options("/analyze");
  REQUIRE(res);
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
  server.Stop();
}
