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

#ifndef TAPKIT_SERVER_H_
#define TAPKIT_SERVER_H_

// HTTP inference service.
//
//   POST /analyze   multipart fields "screenshot" (PNG) and "hierarchy"
//                   (JSON view hierarchy); optional query ?threshold=t with
//                   0 < t < 1. Returns one entry per selected element.
//   GET  /health    200 once a model is loaded, 503 before.
//
// Error bodies are {"error": reason}. Status codes: 400 malformed payload,
// 413 payload over the size limit, 422 landscape screenshot.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tapkit/dataset.h"
#include "tapkit/features.h"
#include "tapkit/model.h"

namespace httplib {
class Server;
}

namespace tapkit {

struct ElementAnalysis {
  std::string element_id;
  Rect bounds;  // screenshot pixels
  bool clickable = false;
  double probability = 0.0;
  bool perceived_tappable = false;
  bool mismatch = false;
};

struct AnalysisResponse {
  std::vector<ElementAnalysis> elements;  // document order
  std::string model_version;
  double threshold_used = 0.5;
  nlohmann::json ToJson() const;
};

inline constexpr std::uint64_t kAnalysisSelectionSeed = 0;

// Selects elements the way a labeling study would (fixed seed), scores them
// and compares each decision with the declared clickable state.
AnalysisResponse AnalyzeScreen(const Model& model, const EmbeddingTable& embeddings,
                               const ScreenRecord& screen, double threshold,
                               const SelectionLimits& limits = {});

struct ServiceOptions {
  std::size_t max_payload_bytes = 20u << 20;
  SelectionLimits limits;
  std::string cors_origin = "*";
};

struct AnalyzeRequest {
  std::optional<std::string> screenshot;  // PNG bytes
  std::optional<std::string> hierarchy;   // JSON text
  std::optional<std::string> threshold;   // raw query value
  std::size_t payload_bytes = 0;
};

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

// Request handling independent of the transport. The model is set once and
// read concurrently afterwards.
class AnalysisService {
 public:
  AnalysisService(EmbeddingTable embeddings, ServiceOptions options = {});

  // Publishes the model; later calls are rejected with ContractViolation.
  void SetModel(Model model);
  bool ready() const;

  HttpReply Health() const;
  HttpReply Analyze(const AnalyzeRequest& request) const;

  const ServiceOptions& options() const { return options_; }

 private:
  struct Loaded {
    Model model;
    std::string version;
  };
  std::shared_ptr<const Loaded> Snapshot() const;

  EmbeddingTable embeddings_;
  ServiceOptions options_;
  mutable std::mutex mu_;
  std::shared_ptr<const Loaded> loaded_;
};

// Binds an AnalysisService to an HTTP listener running on its own thread.
class HttpServer {
 public:
  explicit HttpServer(AnalysisService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws Error when the
  // address cannot be bound.
  int Start(const std::string& host, int port);
  // Blocks until the listener started by Start() exits.
  void Wait();
  void Stop();

 private:
  AnalysisService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace tapkit

#endif  // TAPKIT_SERVER_H_
