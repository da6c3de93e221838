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

#include "tapkit/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "tapkit/errors.h"
#include "tapkit/evaluation.h"
#include "tapkit/log.h"

namespace tapkit {

using nlohmann::json;
using nn::LayerGrads;
using nn::LayerParams;
using nn::Mode;
using nn::RngStream;
using nn::Tensor;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

// ---------------------------------------------------------------------------
// Config

void ModelConfig::Validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ContractViolation(std::string("invalid model config: ") + what);
  };
  require(conv_filters > 0, "conv_filters must be positive");
  require(conv_layers > 0, "conv_layers must be positive");
  require(!fc_widths.empty(), "fc_widths must not be empty");
  for (const std::size_t w : fc_widths) require(w > 0, "fc widths must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0,1)");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(steps > 0, "steps must be positive");
  require(type_vocab_size > 0, "type_vocab_size must be positive");
  require(type_embedding_dim > 0, "type_embedding_dim must be positive");
  require(shape.element_size > 0 && shape.screen_height > 0 && shape.screen_width > 0,
          "image sizes must be positive");
  std::size_t e = shape.element_size, h = shape.screen_height, w = shape.screen_width;
  for (std::size_t l = 0; l < conv_layers; ++l) {
    require(e >= 2 && h >= 2 && w >= 2, "images too small for the number of conv layers");
    e /= 2;
    h /= 2;
    w /= 2;
  }
}

json ModelConfig::ToJson() const {
  return {
      {"conv_filters", conv_filters},
      {"conv_layers", conv_layers},
      {"fc_widths", fc_widths},
      {"dropout", dropout},
      {"learning_rate", learning_rate},
      {"batch_size", batch_size},
      {"steps", steps},
      {"type_vocab_size", type_vocab_size},
      {"type_embedding_dim", type_embedding_dim},
      {"seed", seed},
      {"element_size", shape.element_size},
      {"screen_height", shape.screen_height},
      {"screen_width", shape.screen_width},
  };
}

ModelConfig ModelConfig::FromJson(const json& j) {
  ModelConfig c;
  try {
    c.conv_filters = j.at("conv_filters").get<std::size_t>();
    c.conv_layers = j.at("conv_layers").get<std::size_t>();
    c.fc_widths = j.at("fc_widths").get<std::vector<std::size_t>>();
    c.dropout = j.at("dropout").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.steps = j.at("steps").get<std::size_t>();
    c.type_vocab_size = j.at("type_vocab_size").get<std::size_t>();
    c.type_embedding_dim = j.at("type_embedding_dim").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.shape.element_size = j.at("element_size").get<std::size_t>();
    c.shape.screen_height = j.at("screen_height").get<std::size_t>();
    c.shape.screen_width = j.at("screen_width").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad model config: ") + e.what());
  }
  c.Validate();
  return c;
}

std::size_t TowerFlatSize(std::size_t height, std::size_t width, const ModelConfig& config) {
  for (std::size_t l = 0; l < config.conv_layers; ++l) {
    height /= 2;
    width /= 2;
  }
  return height * width * config.conv_filters;
}

InputLayout LayoutFor(const ModelConfig& config) {
  InputLayout layout;
  layout.element = TowerFlatSize(config.shape.element_size, config.shape.element_size, config);
  layout.screen = TowerFlatSize(config.shape.screen_height, config.shape.screen_width, config);
  layout.type = config.type_embedding_dim;
  return layout;
}

// ---------------------------------------------------------------------------
// Network

template <class T>
std::size_t Network<T>::ParameterCount() const {
  std::size_t n = type_embedding.ParameterCount() + output.ParameterCount();
  for (const auto& l : element_tower) n += l.ParameterCount();
  for (const auto& l : screen_tower) n += l.ParameterCount();
  for (const auto& l : fc) n += l.ParameterCount();
  return n;
}

namespace {

template <class P, class Fn>
void VisitLayers(P& net, Fn&& fn) {
  for (std::size_t i = 0; i < net.element_tower.size(); ++i) {
    fn("element_tower.conv" + std::to_string(i), net.element_tower[i]);
  }
  for (std::size_t i = 0; i < net.screen_tower.size(); ++i) {
    fn("screen_tower.conv" + std::to_string(i), net.screen_tower[i]);
  }
  fn(std::string("type_embedding"), net.type_embedding);
  for (std::size_t i = 0; i < net.fc.size(); ++i) fn("fc" + std::to_string(i), net.fc[i]);
  fn(std::string("output"), net.output);
}

}  // namespace

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> Network<T>::NamedArrays() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  VisitLayers(*this, [&](const std::string& name, LayerParams<T>& p) {
    out.emplace_back(name + ".weights", &p.weights);
    if (!p.bias.empty()) out.emplace_back(name + ".bias", &p.bias);
  });
  return out;
}

template <class T>
std::vector<std::pair<std::string, const Tensor<T>*>> Network<T>::NamedArrays() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  VisitLayers(*this, [&](const std::string& name, const LayerParams<T>& p) {
    out.emplace_back(name + ".weights", &p.weights);
    if (!p.bias.empty()) out.emplace_back(name + ".bias", &p.bias);
  });
  return out;
}

template <class T>
Network<T> BuildNetwork(const ModelConfig& config) {
  config.Validate();
  const RngStream init = RngStream(config.seed).Split("init");
  Network<T> net;
  net.config = config;
  const std::size_t f = config.conv_filters;
  for (std::size_t l = 0; l < config.conv_layers; ++l) {
    RngStream e = init.Split("element_tower.conv" + std::to_string(l));
    net.element_tower.push_back(nn::MakeConv3x3<T>(l == 0 ? 3 : f, f, e));
    RngStream s = init.Split("screen_tower.conv" + std::to_string(l));
    net.screen_tower.push_back(nn::MakeConv3x3<T>(l == 0 ? 3 : f, f, s));
  }
  RngStream emb = init.Split("type_embedding");
  net.type_embedding = nn::MakeEmbedding<T>(config.type_vocab_size, config.type_embedding_dim, emb);
  std::size_t in = LayoutFor(config).total();
  for (std::size_t i = 0; i < config.fc_widths.size(); ++i) {
    RngStream r = init.Split("fc" + std::to_string(i));
    net.fc.push_back(nn::MakeDense<T>(in, config.fc_widths[i], r));
    in = config.fc_widths[i];
  }
  RngStream out = init.Split("output");
  net.output = nn::MakeDense<T>(in, 1, out);
  return net;
}

template <class T>
NetworkGrads<T>::NetworkGrads(const Network<T>& net)
    : type_embedding(net.type_embedding), output(net.output) {
  for (const auto& l : net.element_tower) element_tower.emplace_back(l);
  for (const auto& l : net.screen_tower) screen_tower.emplace_back(l);
  for (const auto& l : net.fc) fc.emplace_back(l);
}

template <class T>
void NetworkGrads<T>::Zero() {
  for (auto& g : element_tower) g.Zero();
  for (auto& g : screen_tower) g.Zero();
  type_embedding.Zero();
  for (auto& g : fc) g.Zero();
  output.Zero();
}

template <class T>
std::vector<const Tensor<T>*> NetworkGrads<T>::Arrays() const {
  std::vector<const Tensor<T>*> out;
  VisitLayers(*this, [&](const std::string&, const LayerGrads<T>& g) {
    out.push_back(&g.weights);
    if (!g.bias.empty()) out.push_back(&g.bias);
  });
  return out;
}

namespace {

template <class T>
Tensor<T> AsScalar(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template Cast<T>();
  }
}

template <class T>
struct TowerCache {
  std::vector<Tensor<T>> inputs;     // conv inputs per layer
  std::vector<Tensor<T>> activated;  // post-ReLU conv outputs
  std::vector<std::vector<std::uint32_t>> argmax;
  Tensor<T> output;  // final pooled map; flattened in HWC order
};

template <class T>
TowerCache<T> TowerForward(const std::vector<LayerParams<T>>& layers, Tensor<T> x) {
  TowerCache<T> cache;
  for (const auto& p : layers) {
    Tensor<T> z = nn::Conv3x3Forward(x, p);
    nn::ReluInPlace(z.values());
    auto pooled = nn::MaxPool2x2Forward(z);
    cache.inputs.push_back(std::move(x));
    cache.activated.push_back(std::move(z));
    cache.argmax.push_back(std::move(pooled.argmax));
    x = std::move(pooled.output);
  }
  cache.output = std::move(x);
  return cache;
}

template <class T>
void TowerBackward(const std::vector<LayerParams<T>>& layers, const TowerCache<T>& cache,
                   std::span<const T> grad_flat, std::vector<LayerGrads<T>>& grads) {
  Tensor<T> g(cache.output.shape(), std::vector<T>(grad_flat.begin(), grad_flat.end()));
  for (std::size_t l = layers.size(); l-- > 0;) {
    Tensor<T> gz = nn::MaxPool2x2Backward(g, std::span<const std::uint32_t>(cache.argmax[l]),
                                          cache.activated[l].shape());
    nn::ReluBackward(cache.activated[l].values(), gz.values());
    Tensor<T> gin;
    nn::Conv3x3Backward(cache.inputs[l], layers[l], gz, grads[l], l > 0 ? &gin : nullptr);
    g = std::move(gin);
  }
}

template <class T>
struct HeadCache {
  std::vector<T> input;
  std::vector<std::vector<T>> activations;  // per fc layer, after ReLU and dropout
  std::vector<std::vector<T>> masks;        // empty when dropout was not applied
  std::size_t type_index = 0;
  T logit{};
};

// Shapes and indices only; value ranges are established by the encoder.
void CheckInput(const ModelConfig& config, const FeatureBundle& b) {
  const FeatureShape& s = config.shape;
  if (b.element_image.shape() != nn::Shape{s.element_size, s.element_size, 3}) {
    throw ContractViolation("element image " + nn::ShapeString(b.element_image.shape()) +
                            " does not fit the model");
  }
  if (!b.screen_image || b.screen_image->shape() != nn::Shape{s.screen_height, s.screen_width, 3}) {
    throw ContractViolation("screen image missing or does not fit the model");
  }
  if (b.type_index >= config.type_vocab_size) {
    throw ContractViolation("type index outside the model's vocabulary");
  }
}

template <class T>
std::vector<T> HeadInput(const Network<T>& net, const FeatureBundle& b,
                         std::span<const std::type_identity_t<T>> element_flat,
                         std::span<const std::type_identity_t<T>> screen_flat) {
  std::vector<T> input;
  input.reserve(LayoutFor(net.config).total());
  input.insert(input.end(), element_flat.begin(), element_flat.end());
  input.insert(input.end(), screen_flat.begin(), screen_flat.end());
  for (const float v : b.semantic) input.push_back(static_cast<T>(v));
  input.push_back(static_cast<T>(b.word_count));
  const auto type_row = nn::EmbeddingForward(b.type_index, net.type_embedding);
  input.insert(input.end(), type_row.begin(), type_row.end());
  input.push_back(static_cast<T>(b.clickable));
  for (const double v : {b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h}) input.push_back(static_cast<T>(v));
  return input;
}

// Continues the head from the pre-activation of the first fc layer.
template <class T>
void HeadFromFirst(const Network<T>& net, HeadCache<T>& c, std::vector<T> z, Mode mode,
                   RngStream* rng) {
  if (mode == Mode::kTrain && rng == nullptr) {
    throw ContractViolation("train-mode forward needs a dropout rng");
  }
  for (std::size_t l = 0; l < net.fc.size(); ++l) {
    if (l > 0) z = nn::DenseForward(std::span<const T>(c.activations.back()), net.fc[l]);
    nn::ReluInPlace(std::span<T>(z));
    std::vector<T> mask;
    if (mode == Mode::kTrain) mask = nn::DropoutInPlace(std::span<T>(z), net.config.dropout, mode, *rng);
    c.activations.push_back(std::move(z));
    c.masks.push_back(std::move(mask));
  }
  c.logit = nn::DenseForward(std::span<const T>(c.activations.back()), net.output)[0];
}

template <class T>
HeadCache<T> HeadForward(const Network<T>& net, const FeatureBundle& b,
                         std::span<const std::type_identity_t<T>> element_flat,
                         std::span<const std::type_identity_t<T>> screen_flat,
                         Mode mode, RngStream* rng) {
  HeadCache<T> c;
  c.type_index = b.type_index;
  c.input = HeadInput(net, b, element_flat, screen_flat);
  HeadFromFirst(net, c, nn::DenseForward(std::span<const T>(c.input), net.fc[0]), mode, rng);
  return c;
}

// Back-propagates one example from the logit down to the pre-activation of
// the first fc layer, adding gradients for every layer above it.
template <class T>
std::vector<T> HeadBackwardToFirst(const Network<T>& net, const HeadCache<T>& c, T dlogit,
                                   NetworkGrads<T>& grads) {
  const std::vector<T> g_out{dlogit};
  std::vector<T> g(c.activations.back().size());
  nn::DenseBackward(std::span<const T>(c.activations.back()), net.output,
                    std::span<const T>(g_out), grads.output, std::span<T>(g));
  for (std::size_t l = net.fc.size(); l-- > 0;) {
    if (!c.masks[l].empty()) nn::DropoutBackward(std::span<T>(g), std::span<const T>(c.masks[l]));
    nn::ReluBackward(std::span<const T>(c.activations[l]), std::span<T>(g));
    if (l == 0) break;
    std::vector<T> prev(c.activations[l - 1].size());
    nn::DenseBackward(std::span<const T>(c.activations[l - 1]), net.fc[l], std::span<const T>(g),
                      grads.fc[l], std::span<T>(prev));
    g = std::move(prev);
  }
  return g;
}

}  // namespace

template <class T>
T Logit(const Network<T>& net, const FeatureBundle& bundle, Mode mode, RngStream* rng) {
  CheckInput(net.config, bundle);
  const auto element = TowerForward(net.element_tower, AsScalar<T>(bundle.element_image));
  const auto screen = TowerForward(net.screen_tower, AsScalar<T>(*bundle.screen_image));
  return HeadForward(net, bundle, element.output.values(), screen.output.values(), mode, rng).logit;
}

template <class T>
double BatchLossAndGradients(const Network<T>& net, std::span<const FeatureBundle* const> batch,
                             std::span<const int> labels, Mode mode, RngStream& rng,
                             NetworkGrads<T>& grads) {
  if (batch.empty() || batch.size() != labels.size()) {
    throw ContractViolation("batch and labels must be nonempty and the same length");
  }
  const std::size_t n = batch.size();
  const InputLayout layout = LayoutFor(net.config);
  std::map<const Tensor<float>*, std::size_t> screen_slot;
  std::vector<const Tensor<float>*> screens;
  std::vector<std::size_t> which(n);
  for (std::size_t i = 0; i < n; ++i) {
    CheckInput(net.config, *batch[i]);
    const Tensor<float>* s = batch[i]->screen_image.get();
    auto [it, inserted] = screen_slot.emplace(s, screens.size());
    if (inserted) screens.push_back(s);
    which[i] = it->second;
  }

  // Forward.
  std::vector<TowerCache<T>> screen_caches;
  screen_caches.reserve(screens.size());
  for (const auto* s : screens) screen_caches.push_back(TowerForward(net.screen_tower, AsScalar<T>(*s)));
  std::vector<TowerCache<T>> element_caches;
  std::vector<HeadCache<T>> heads(n);
  std::vector<std::span<const T>> inputs;
  element_caches.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    element_caches.push_back(TowerForward(net.element_tower, AsScalar<T>(batch[i]->element_image)));
    heads[i].type_index = batch[i]->type_index;
    heads[i].input = HeadInput(net, *batch[i], element_caches[i].output.values(),
                               screen_caches[which[i]].output.values());
    inputs.emplace_back(heads[i].input);
  }
  auto first = nn::DenseForwardBatch(inputs, net.fc[0]);

  // Loss and head backward down to the first fc layer.
  const double inv_batch = 1.0 / static_cast<double>(n);
  double total = 0.0;
  std::vector<std::vector<T>> g_first(n);
  for (std::size_t i = 0; i < n; ++i) {
    HeadFromFirst(net, heads[i], std::move(first[i]), mode, &rng);
    const auto loss = nn::SigmoidCrossEntropy(static_cast<double>(heads[i].logit), labels[i]);
    total += loss.loss;
    g_first[i] = HeadBackwardToFirst(net, heads[i], static_cast<T>(loss.dloss_dlogit * inv_batch), grads);
  }

  // First fc layer for the whole batch, then the towers.
  std::vector<std::vector<T>> grad_input(n, std::vector<T>(layout.total()));
  std::vector<std::span<const T>> g_spans;
  std::vector<std::span<T>> gin_spans;
  for (std::size_t i = 0; i < n; ++i) {
    g_spans.emplace_back(g_first[i]);
    gin_spans.emplace_back(grad_input[i]);
  }
  nn::DenseBackwardBatch(inputs, net.fc[0], g_spans, grads.fc[0], gin_spans);

  const std::size_t type_offset = layout.element + layout.screen + layout.semantic + layout.word_count;
  std::vector<std::vector<T>> screen_grads(screens.size(), std::vector<T>(layout.screen));
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const T> gi(grad_input[i]);
    nn::EmbeddingBackward(heads[i].type_index, gi.subspan(type_offset, layout.type),
                          grads.type_embedding);
    TowerBackward(net.element_tower, element_caches[i], gi.subspan(0, layout.element),
                  grads.element_tower);
    auto& sg = screen_grads[which[i]];
    for (std::size_t j = 0; j < layout.screen; ++j) sg[j] += gi[layout.element + j];
  }
  for (std::size_t s = 0; s < screens.size(); ++s) {
    TowerBackward(net.screen_tower, screen_caches[s], std::span<const T>(screen_grads[s]),
                  grads.screen_tower);
  }
  return total * inv_batch;
}

template <class T>
void ApplyAdagrad(Network<T>& net, const NetworkGrads<T>& grads) {
  const double lr = net.config.learning_rate;
  for (std::size_t i = 0; i < net.element_tower.size(); ++i) {
    nn::AdagradStep(net.element_tower[i], grads.element_tower[i], lr);
  }
  for (std::size_t i = 0; i < net.screen_tower.size(); ++i) {
    nn::AdagradStep(net.screen_tower[i], grads.screen_tower[i], lr);
  }
  nn::AdagradStep(net.type_embedding, grads.type_embedding, lr);
  for (std::size_t i = 0; i < net.fc.size(); ++i) nn::AdagradStep(net.fc[i], grads.fc[i], lr);
  nn::AdagradStep(net.output, grads.output, lr);
}

template struct Network<float>;
template struct Network<double>;
template struct NetworkGrads<float>;
template struct NetworkGrads<double>;
template Network<float> BuildNetwork<float>(const ModelConfig&);
template Network<double> BuildNetwork<double>(const ModelConfig&);
template float Logit<float>(const Network<float>&, const FeatureBundle&, Mode, RngStream*);
template double Logit<double>(const Network<double>&, const FeatureBundle&, Mode, RngStream*);
template double BatchLossAndGradients<float>(const Network<float>&,
                                             std::span<const FeatureBundle* const>,
                                             std::span<const int>, Mode, RngStream&,
                                             NetworkGrads<float>&);
template double BatchLossAndGradients<double>(const Network<double>&,
                                              std::span<const FeatureBundle* const>,
                                              std::span<const int>, Mode, RngStream&,
                                              NetworkGrads<double>&);
template void ApplyAdagrad<float>(Network<float>&, const NetworkGrads<float>&);
template void ApplyAdagrad<double>(Network<double>&, const NetworkGrads<double>&);

// ---------------------------------------------------------------------------
// Model, training

double Model::Predict(const FeatureBundle& bundle) const {
  return nn::Sigmoid(static_cast<double>(Logit(net, bundle, Mode::kInfer, nullptr)));
}

std::string Model::Version() const {
  std::string bytes;
  for (const auto& [name, t] : net.NamedArrays()) {
    bytes += name;
    bytes.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(float));
  }
  return Fingerprint(bytes);
}

EncodedCorpus EncodeCorpus(const Corpus& corpus, const FeatureContext& ctx) {
  EncodedCorpus out;
  std::map<std::string, std::shared_ptr<const Tensor<float>>> screens;
  out.bundles.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) {
    const ScreenRecord& screen = corpus.screen(ex.screen_id);
    auto& tensor = screens[ex.screen_id];
    if (!tensor) tensor = EncodeScreen(screen, ctx.shape);
    out.bundles.push_back(EncodeElement(screen, corpus.element(ex), ctx, tensor));
    out.labels.push_back(ex.human_label);
  }
  return out;
}

namespace {

// Activation buffers of a screen tower are a few MB and are allocated and
// freed every step; keep glibc from returning them to the OS each time.
void KeepLargeBuffersPooled() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
  });
#endif
}

}  // namespace

TrainResult TrainNetwork(Network<float>& net, const EncodedCorpus& data,
                         const TrainOptions& options) {
  KeepLargeBuffersPooled();
  const ModelConfig& cfg = net.config;
  cfg.Validate();
  const std::size_t n = data.bundles.size();
  if (n == 0) throw DataError("cannot train on an empty corpus");
  if (data.labels.size() != n) throw ContractViolation("labels and bundles differ in length");

  const RngStream root(cfg.seed);
  const RngStream order_root = root.Split("batch-order");
  const RngStream dropout_root = root.Split("dropout");
  std::vector<std::size_t> order(n);
  std::size_t cursor = n, epoch = 0;

  NetworkGrads<float> grads(net);
  std::vector<const FeatureBundle*> batch;
  std::vector<int> labels;
  TrainResult result;
  double window = 0.0;
  std::size_t window_n = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    batch.clear();
    labels.clear();
    while (batch.size() < cfg.batch_size) {
      if (cursor == n) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        RngStream shuffle = order_root.Split(epoch++);
        shuffle.Shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      batch.push_back(&data.bundles[idx]);
      labels.push_back(data.labels[idx]);
    }
    grads.Zero();
    RngStream dropout = dropout_root.Split(step);
    const double loss = BatchLossAndGradients<float>(net, batch, labels, Mode::kTrain, dropout, grads);
    if (!std::isfinite(loss)) {
      throw TrainingError("loss became nonfinite at step " + std::to_string(step));
    }
    try {
      ApplyAdagrad(net, grads);
    } catch (const TrainingError& e) {
      throw TrainingError("step " + std::to_string(step) + ": " + e.what());
    }
    result.step_losses.push_back(loss);
    result.steps_run = step + 1;
    window += loss;
    ++window_n;
    if (options.report_every > 0 && result.steps_run % options.report_every == 0) {
      const TrainProgress progress{result.steps_run, window / static_cast<double>(window_n)};
      logger().info("step {} loss {:.5f}", progress.step, progress.running_loss);
      window = 0.0;
      window_n = 0;
      if (options.on_report && !options.on_report(progress)) break;
    }
  }
  return result;
}

std::vector<double> PredictAll(const Model& model, const EncodedCorpus& data) {
  const Network<float>& net = model.net;
  std::map<const Tensor<float>*, Tensor<float>> screen_out;
  std::vector<double> out;
  out.reserve(data.bundles.size());
  for (const auto& b : data.bundles) {
    CheckInput(net.config, b);
    auto it = screen_out.find(b.screen_image.get());
    if (it == screen_out.end()) {
      it = screen_out.emplace(b.screen_image.get(), TowerForward(net.screen_tower, *b.screen_image).output)
               .first;
    }
    const auto element = TowerForward(net.element_tower, b.element_image);
    const auto head = HeadForward<float>(net, b, element.output.values(), it->second.values(),
                                         Mode::kInfer, nullptr);
    out.push_back(nn::Sigmoid(static_cast<double>(head.logit)));
  }
  return out;
}

Model TrainModel(const Corpus& train, const ModelConfig& config, const EmbeddingTable& embeddings,
                 const TypeVocabulary& types, const Corpus* calibration,
                 const TrainOptions& options, TrainResult* result) {
  if (types.size() != config.type_vocab_size) {
    throw ContractViolation("type vocabulary size differs from the model config");
  }
  Model model;
  model.net = BuildNetwork<float>(config);
  model.types = types;
  model.embedding_fingerprint = embeddings.fingerprint();
  const FeatureContext ctx = model.Context(embeddings);
  const EncodedCorpus data = EncodeCorpus(train, ctx);
  TrainResult r = TrainNetwork(model.net, data, options);
  if (result != nullptr) *result = std::move(r);
  if (calibration != nullptr && !calibration->examples.empty()) {
    const EncodedCorpus held_out = EncodeCorpus(*calibration, ctx);
    if (std::find(held_out.labels.begin(), held_out.labels.end(), 1) == held_out.labels.end()) {
      logger().warn("calibration split has no tappable examples; keeping threshold 0.5");
    } else {
      const auto scores = PredictAll(model, held_out);
      model.threshold = SelectThreshold(ComputePrCurve(scores, held_out.labels));
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'T', 'A', 'P', 'K', 'I', 'T', 'C', 'K'};

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t GetU32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

json HeaderJson(const Model& model) {
  json arrays = json::array();
  for (const auto& [name, t] : model.net.NamedArrays()) {
    arrays.push_back({{"name", name}, {"shape", t->shape()}});
  }
  return {
      {"format", "tapkit-checkpoint"},
      {"format_version", kCheckpointFormatVersion},
      {"config", model.net.config.ToJson()},
      {"type_vocabulary", model.types.names()},
      {"embedding_fingerprint", model.embedding_fingerprint},
      {"threshold", model.threshold},
      {"model_version", model.Version()},
      {"parameter_count", model.net.ParameterCount()},
      {"arrays", std::move(arrays)},
  };
}

// Splits off the fixed prefix and parses the header JSON.
std::pair<CheckpointHeader, std::size_t> ParseHeader(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw DataError("not a tapkit checkpoint (bad magic)");
  }
  CheckpointHeader header;
  header.format_version = GetU32(bytes.data() + 8);
  if (header.format_version != kCheckpointFormatVersion) {
    throw DataError("checkpoint format version " + std::to_string(header.format_version) +
                    " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  }
  const std::size_t length = GetU32(bytes.data() + 12);
  if (bytes.size() < 16 + length) throw DataError("checkpoint truncated inside the header");
  try {
    header.json = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(length));
  } catch (const json::parse_error& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  return {std::move(header), 16 + length};
}

}  // namespace

std::vector<std::uint8_t> SerializeCheckpoint(const Model& model) {
  const std::string header = HeaderJson(model).dump();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  PutU32(out, kCheckpointFormatVersion);
  PutU32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& [name, t] : model.net.NamedArrays()) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t->data());
    out.insert(out.end(), p, p + t->size() * sizeof(float));
  }
  return out;
}

void SaveCheckpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = SerializeCheckpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

CheckpointHeader ReadCheckpointHeader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> prefix(16);
  in.read(reinterpret_cast<char*>(prefix.data()), 16);
  if (in.gcount() != 16) throw DataError("checkpoint truncated: " + path.string());
  const std::uint32_t length = GetU32(prefix.data() + 12);
  prefix.resize(16 + length);
  in.read(reinterpret_cast<char*>(prefix.data() + 16), length);
  if (static_cast<std::uint32_t>(in.gcount()) != length) {
    throw DataError("checkpoint truncated inside the header: " + path.string());
  }
  return ParseHeader(prefix).first;
}

Model ParseCheckpoint(std::span<const std::uint8_t> bytes, const EmbeddingTable* embeddings) {
  auto [header, offset] = ParseHeader(bytes);
  const json& h = header.json;
  Model model;
  try {
    model.net = BuildNetwork<float>(ModelConfig::FromJson(h.at("config")));
    model.types = TypeVocabulary(h.at("type_vocabulary").get<std::vector<std::string>>());
    model.embedding_fingerprint = h.at("embedding_fingerprint").get<std::string>();
    model.threshold = h.at("threshold").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header incomplete: ") + e.what());
  }
  auto arrays = model.net.NamedArrays();
  const json& directory = h.at("arrays");
  if (directory.size() != arrays.size()) throw DataError("checkpoint array count does not match config");
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    auto& [name, tensor] = arrays[i];
    if (directory[i].at("name").get<std::string>() != name ||
        directory[i].at("shape").get<nn::Shape>() != tensor->shape()) {
      throw DataError("checkpoint array " + std::to_string(i) + " does not match expected " + name +
                      " " + nn::ShapeString(tensor->shape()));
    }
    const std::size_t n = tensor->size() * sizeof(float);
    if (bytes.size() < offset + n) throw DataError("checkpoint truncated in array " + name);
    std::memcpy(tensor->data(), bytes.data() + offset, n);
    offset += n;
  }
  if (offset != bytes.size()) throw DataError("checkpoint has trailing bytes");
  if (embeddings != nullptr && embeddings->fingerprint() != model.embedding_fingerprint) {
    logger().warn("embedding table fingerprint {} differs from the one used in training ({})",
                  embeddings->fingerprint(), model.embedding_fingerprint);
  }
  return model;
}

Model LoadCheckpoint(const std::filesystem::path& path, const EmbeddingTable* embeddings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  return ParseCheckpoint(bytes, embeddings);
}

}  // namespace tapkit
