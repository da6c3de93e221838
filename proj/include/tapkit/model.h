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

#ifndef TAPKIT_MODEL_H_
#define TAPKIT_MODEL_H_

// The tappability network: two conv towers (element crop, whole screen),
// concatenated with the text, type, clickable and bbox features, then a
// ReLU/dropout fc stack and a single sigmoid output.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tapkit/corpus.h"
#include "tapkit/features.h"
#include "tapkit/nn/layers.h"
#include "tapkit/nn/rng.h"

namespace tapkit {

struct ModelConfig {
  std::size_t conv_filters = 8;
  std::size_t conv_layers = 3;
  std::vector<std::size_t> fc_widths{100, 100};
  double dropout = 0.4;
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t steps = 2000;
  std::size_t type_vocab_size = kTypeVocabularySize;
  std::size_t type_embedding_dim = 6;
  std::uint64_t seed = 1;
  FeatureShape shape;

  // Throws ContractViolation naming the offending field.
  void Validate() const;
  nlohmann::json ToJson() const;
  static ModelConfig FromJson(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Lengths of the segments of the fc input, in concatenation order.
struct InputLayout {
  std::size_t element = 0;
  std::size_t screen = 0;
  std::size_t semantic = kWordVectorDim;
  std::size_t word_count = 1;
  std::size_t type = 0;
  std::size_t clickable = 1;
  std::size_t bbox = 4;

  std::size_t total() const {
    return element + screen + semantic + word_count + type + clickable + bbox;
  }
};

// Flattened output length of a conv tower: each layer keeps H x W (same
// padding) and the 2x2 pool floors odd sizes.
std::size_t TowerFlatSize(std::size_t height, std::size_t width, const ModelConfig& config);
InputLayout LayoutFor(const ModelConfig& config);

template <class T>
struct Network {
  ModelConfig config;
  std::vector<nn::LayerParams<T>> element_tower;
  std::vector<nn::LayerParams<T>> screen_tower;
  nn::LayerParams<T> type_embedding;
  std::vector<nn::LayerParams<T>> fc;
  nn::LayerParams<T> output;

  std::size_t ParameterCount() const;

  // Weight and bias tensors with stable names, in checkpoint order.
  std::vector<std::pair<std::string, nn::Tensor<T>*>> NamedArrays();
  std::vector<std::pair<std::string, const nn::Tensor<T>*>> NamedArrays() const;

  template <class U>
  Network<U> Cast() const {
    Network<U> out;
    out.config = config;
    for (const auto& l : element_tower) out.element_tower.push_back(l.template Cast<U>());
    for (const auto& l : screen_tower) out.screen_tower.push_back(l.template Cast<U>());
    out.type_embedding = type_embedding.template Cast<U>();
    for (const auto& l : fc) out.fc.push_back(l.template Cast<U>());
    out.output = output.template Cast<U>();
    return out;
  }
};

// Glorot-uniform weights and zero biases, drawn from streams split off
// config.seed by layer name.
template <class T>
Network<T> BuildNetwork(const ModelConfig& config);

template <class T>
struct NetworkGrads {
  std::vector<nn::LayerGrads<T>> element_tower;
  std::vector<nn::LayerGrads<T>> screen_tower;
  nn::LayerGrads<T> type_embedding;
  std::vector<nn::LayerGrads<T>> fc;
  nn::LayerGrads<T> output;

  explicit NetworkGrads(const Network<T>& net);
  void Zero();
  // Same order as Network::NamedArrays.
  std::vector<const nn::Tensor<T>*> Arrays() const;
};

// Pre-sigmoid output. In train mode dropout masks are drawn from `rng`;
// in infer mode `rng` may be null.
template <class T>
T Logit(const Network<T>& net, const FeatureBundle& bundle, nn::Mode mode,
        nn::RngStream* rng);

// Mean sigmoid cross-entropy over the batch, with its gradient added to
// `grads` (also averaged over the batch). Each distinct screen image is run
// through the screen tower once and back-propagated once with the summed
// gradient of every example that shares it.
template <class T>
double BatchLossAndGradients(const Network<T>& net, std::span<const FeatureBundle* const> batch,
                             std::span<const int> labels, nn::Mode mode, nn::RngStream& rng,
                             NetworkGrads<T>& grads);

template <class T>
void ApplyAdagrad(Network<T>& net, const NetworkGrads<T>& grads);

// A trained network with what is needed to encode inputs for it and to turn
// its probability into a decision.
struct Model {
  Network<float> net;
  TypeVocabulary types = TypeVocabulary::Default();
  std::string embedding_fingerprint;
  double threshold = 0.5;

  // Sigmoid of the inference-mode logit.
  double Predict(const FeatureBundle& bundle) const;
  // Hash of the parameter bytes; changes whenever any weight changes.
  std::string Version() const;
  FeatureContext Context(const EmbeddingTable& embeddings) const {
    return {&embeddings, &types, net.config.shape};
  }
};

struct EncodedCorpus {
  std::vector<FeatureBundle> bundles;
  std::vector<int> labels;  // human labels
};

// One bundle per example; screens are encoded once and shared.
EncodedCorpus EncodeCorpus(const Corpus& corpus, const FeatureContext& ctx);

struct TrainProgress {
  std::size_t step = 0;         // steps completed
  double running_loss = 0.0;    // mean batch loss since the last report
};

struct TrainOptions {
  std::size_t report_every = 100;
  // Called after every report_every steps; returning false stops training.
  std::function<bool(const TrainProgress&)> on_report;
};

struct TrainResult {
  std::vector<double> step_losses;
  std::size_t steps_run = 0;
};

// config.steps minibatch Adagrad updates. Batches are drawn from a seeded
// permutation of the examples, reshuffled every epoch. Throws TrainingError
// naming the step when the loss becomes nonfinite.
TrainResult TrainNetwork(Network<float>& net, const EncodedCorpus& data,
                         const TrainOptions& options = {});

// Builds and trains a model on `train`. The threshold is the max-F1 point
// of the PR curve on `calibration` when given, else 0.5.
Model TrainModel(const Corpus& train, const ModelConfig& config,
                 const EmbeddingTable& embeddings, const TypeVocabulary& types,
                 const Corpus* calibration = nullptr, const TrainOptions& options = {},
                 TrainResult* result = nullptr);

// Probabilities for every example of the encoded corpus, in order.
std::vector<double> PredictAll(const Model& model, const EncodedCorpus& data);

// ---------------------------------------------------------------------------
// Checkpoint container.
//
//   8 bytes   magic "TAPKITCK"
//   u32 LE    format version
//   u32 LE    header length in bytes
//   header    UTF-8 JSON
//   arrays    little-endian float32 values, in header "arrays" order
//
// The byte layout is described in docs/checkpoint_format.md.

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointHeader {
  std::uint32_t format_version = kCheckpointFormatVersion;
  nlohmann::json json;  // full header document
};

std::vector<std::uint8_t> SerializeCheckpoint(const Model& model);
void SaveCheckpoint(const Model& model, const std::filesystem::path& path);

// Reads only the header; the parameter arrays are not touched.
CheckpointHeader ReadCheckpointHeader(const std::filesystem::path& path);

// Throws DataError on a wrong magic, unsupported version or truncated file.
// Logs a warning when `embeddings` is given and its fingerprint differs from
// the one recorded at training time.
Model ParseCheckpoint(std::span<const std::uint8_t> bytes, const EmbeddingTable* embeddings = nullptr);
Model LoadCheckpoint(const std::filesystem::path& path, const EmbeddingTable* embeddings = nullptr);

}  // namespace tapkit

#endif  // TAPKIT_MODEL_H_
