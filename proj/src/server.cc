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

#include "tapkit/server.h"

#include <charconv>
#include <cmath>

#include "httplib.h"
#include "tapkit/errors.h"
#include "tapkit/image.h"
#include "tapkit/log.h"

namespace tapkit {

using nlohmann::json;

json AnalysisResponse::ToJson() const {
  json items = json::array();
  for (const auto& e : elements) {
    items.push_back({{"element_id", e.element_id},
                     {"bounds", {{"x", e.bounds.x}, {"y", e.bounds.y}, {"width", e.bounds.width}, {"height", e.bounds.height}}},
                     {"clickable", e.clickable},
                     {"probability", e.probability},
                     {"perceived_tappable", e.perceived_tappable},
                     {"mismatch", e.mismatch}});
  }
  return {{"elements", std::move(items)}, {"model_version", model_version}, {"threshold_used", threshold_used}};
}

AnalysisResponse AnalyzeScreen(const Model& model, const EmbeddingTable& embeddings, const ScreenRecord& screen,
                               double threshold, const SelectionLimits& limits) {
  nn::RngStream rng(kAnalysisSelectionSeed);
  const auto selected = SelectElements(screen, rng, limits);
  const FeatureContext ctx = model.Context(embeddings);
  EncodedCorpus data;
  if (!selected.empty()) {
    const auto screen_image = EncodeScreen(screen, ctx.shape);
    for (const ViewElement* el : selected) {
      data.bundles.push_back(EncodeElement(screen, *el, ctx, screen_image));
      data.labels.push_back(0);
    }
  }
  const auto probabilities = PredictAll(model, data);
  AnalysisResponse r;
  r.model_version = model.Version();
  r.threshold_used = threshold;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    ElementAnalysis e;
    e.element_id = selected[i]->id;
    e.bounds = screen.ToPixels(selected[i]->bounds);
    e.clickable = selected[i]->clickable;
    e.probability = probabilities[i];
    e.perceived_tappable = e.probability >= threshold;
    e.mismatch = e.perceived_tappable != e.clickable;
    r.elements.push_back(std::move(e));
  }
  return r;
}

namespace {

HttpReply ErrorReply(int status, const std::string& reason) {
  return {status, json{{"error", reason}}.dump()};
}

}  // namespace

AnalysisService::AnalysisService(EmbeddingTable embeddings, ServiceOptions options)
    : embeddings_(std::move(embeddings)), options_(std::move(options)) {}

void AnalysisService::SetModel(Model model) {
  auto loaded = std::make_shared<Loaded>();
  loaded->version = model.Version();
  loaded->model = std::move(model);
  std::lock_guard lock(mu_);
  if (loaded_) throw ContractViolation("the service model is already set");
  loaded_ = std::move(loaded);
}

std::shared_ptr<const AnalysisService::Loaded> AnalysisService::Snapshot() const {
  std::lock_guard lock(mu_);
  return loaded_;
}

bool AnalysisService::ready() const { return Snapshot() != nullptr; }

HttpReply AnalysisService::Health() const {
  const auto loaded = Snapshot();
  if (!loaded) return {503, json{{"status", "loading"}}.dump()};
  return {200, json{{"status", "ok"}, {"model_version", loaded->version}, {"threshold", loaded->model.threshold}}.dump()};
}

HttpReply AnalysisService::Analyze(const AnalyzeRequest& request) const {
  if (request.payload_bytes > options_.max_payload_bytes) {
    return ErrorReply(413, "payload of " + std::to_string(request.payload_bytes) + " bytes exceeds the limit of " +
                               std::to_string(options_.max_payload_bytes));
  }
  const auto loaded = Snapshot();
  if (!loaded) return ErrorReply(503, "model not loaded yet");
  if (!request.screenshot) return ErrorReply(400, "missing multipart field \"screenshot\"");
  if (!request.hierarchy) return ErrorReply(400, "missing multipart field \"hierarchy\"");

  double threshold = loaded->model.threshold;
  if (request.threshold) {
    const std::string& t = *request.threshold;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), threshold);
    if (ec != std::errc() || end != t.data() + t.size() || !(threshold > 0.0 && threshold < 1.0)) {
      return ErrorReply(400, "threshold must be a number strictly between 0 and 1, got \"" + t + "\"");
    }
  }

  Image image;
  try {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(request.screenshot->data());
    image = DecodePng({bytes, request.screenshot->size()});
  } catch (const Error& e) {
    return ErrorReply(400, std::string("screenshot is not a readable PNG: ") + e.what());
  }
  if (image.width > image.height) {
    return ErrorReply(422, "landscape screenshot (" + std::to_string(image.width) + "x" +
                               std::to_string(image.height) + "); only portrait screens are supported");
  }
  ParsedHierarchy parsed;
  try {
    parsed = ParseHierarchy(*request.hierarchy);
  } catch (const Error& e) {
    return ErrorReply(400, std::string("hierarchy: ") + e.what());
  }
  for (const auto& w : parsed.warnings) logger().debug("hierarchy: {}", w);

  try {
    const ScreenRecord screen = MakeScreen("upload", std::move(image), std::move(parsed.root));
    const auto response = AnalyzeScreen(loaded->model, embeddings_, screen, threshold, options_.limits);
    return {200, response.ToJson().dump()};
  } catch (const DataError& e) {
    return ErrorReply(400, e.what());
  } catch (const ContractViolation& e) {
    return ErrorReply(400, e.what());
  }
}

HttpServer::HttpServer(AnalysisService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  const std::string origin = service_.options().cors_origin;
  s.set_default_headers({{"Access-Control-Allow-Origin", origin}});
  s.set_payload_max_length(service_.options().max_payload_bytes);

  s.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    const HttpReply r = service_.Health();
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  s.Post("/analyze", [this](const httplib::Request& req, httplib::Response& res) {
    AnalyzeRequest a;
    if (req.has_file("screenshot")) a.screenshot = req.get_file_value("screenshot").content;
    if (req.has_file("hierarchy")) a.hierarchy = req.get_file_value("hierarchy").content;
    if (req.has_param("threshold")) a.threshold = req.get_param_value("threshold");
    a.payload_bytes = req.body.size();
    for (const auto& [name, file] : req.files) a.payload_bytes += file.content.size();
    const HttpReply r = service_.Analyze(a);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  s.Options(R"(/(analyze|health))", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  s.set_error_handler([this](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    std::string reason = httplib::status_message(res.status);
    if (res.status == 413) {
      reason = "payload exceeds the limit of " + std::to_string(service_.options().max_payload_bytes) + " bytes";
    }
    res.set_content(json{{"error", reason}}.dump(), "application/json");
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string reason = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      reason = e.what();
    } catch (...) {
    }
    logger().error("request failed: {}", reason);
    res.status = 500;
    res.set_content(json{{"error", reason}}.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { Stop(); }

int HttpServer::Start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  logger().info("listening on {}:{}", host, bound);
  return bound;
}

void HttpServer::Wait() {
  if (thread_.joinable()) thread_.join();
}

void HttpServer::Stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace tapkit
