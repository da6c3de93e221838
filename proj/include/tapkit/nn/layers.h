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

#ifndef TAPKIT_NN_LAYERS_H_
#define TAPKIT_NN_LAYERS_H_

// Forward and backward passes for the layer kinds the tappability model
// uses. Everything is templated on the scalar type: float for training,
// double for gradient checks. Rank-3 activations are H x W x C.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "tapkit/errors.h"
#include "tapkit/nn/rng.h"
#include "tapkit/nn/tensor.h"

namespace tapkit::nn {

enum class LayerKind { kConv3x3, kDense, kEmbedding };
enum class Mode { kTrain, kInfer };

inline const char* LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv3x3: return "conv3x3";
    case LayerKind::kDense: return "dense";
    case LayerKind::kEmbedding: return "embedding";
  }
  return "?";
}

// Conv weights are 3 x 3 x Cin x Cout, dense weights In x Out, embedding
// tables Rows x Dim. Embeddings carry no bias. The accumulators hold the
// per-parameter Adagrad squared-gradient sums.
template <class T>
struct LayerParams {
  LayerKind kind = LayerKind::kDense;
  Tensor<T> weights;
  Tensor<T> bias;
  Tensor<T> weight_accum;
  Tensor<T> bias_accum;

  std::size_t ParameterCount() const { return weights.size() + bias.size(); }

  template <class U>
  LayerParams<U> Cast() const {
    LayerParams<U> out;
    out.kind = kind;
    out.weights = weights.template Cast<U>();
    if (!bias.empty()) out.bias = bias.template Cast<U>();
    if (!weight_accum.empty()) out.weight_accum = weight_accum.template Cast<U>();
    if (!bias_accum.empty()) out.bias_accum = bias_accum.template Cast<U>();
    return out;
  }
};

template <class T>
struct LayerGrads {
  Tensor<T> weights;
  Tensor<T> bias;

  LayerGrads() = default;
  explicit LayerGrads(const LayerParams<T>& params)
      : weights(params.weights.shape()) {
    if (!params.bias.empty()) bias = Tensor<T>(params.bias.shape());
  }

  void Zero() {
    weights.Fill(T{0});
    bias.Fill(T{0});
  }

  void Scale(T factor) {
    for (T& v : weights.values()) v *= factor;
    for (T& v : bias.values()) v *= factor;
  }

  void Add(const LayerGrads& other) {
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += other.weights[i];
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += other.bias[i];
  }
};

namespace detail {

template <class T>
Tensor<T> UniformTensor(const Shape& shape, double bound, RngStream& rng) {
  Tensor<T> t(shape);
  for (T& v : t.values()) v = static_cast<T>(rng.Uniform(-bound, bound));
  return t;
}

template <class T>
void AttachAccumulators(LayerParams<T>& p) {
  p.weight_accum = Tensor<T>(p.weights.shape());
  if (!p.bias.empty()) p.bias_accum = Tensor<T>(p.bias.shape());
}

}  // namespace detail

// Glorot-uniform weights, zero bias.
template <class T>
LayerParams<T> MakeConv3x3(std::size_t cin, std::size_t cout, RngStream& rng) {
  LayerParams<T> p;
  p.kind = LayerKind::kConv3x3;
  const double bound = std::sqrt(6.0 / static_cast<double>(9 * cin + 9 * cout));
  p.weights = detail::UniformTensor<T>({3, 3, cin, cout}, bound, rng);
  p.bias = Tensor<T>({cout});
  detail::AttachAccumulators(p);
  return p;
}

template <class T>
LayerParams<T> MakeDense(std::size_t in, std::size_t out, RngStream& rng) {
  LayerParams<T> p;
  p.kind = LayerKind::kDense;
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  p.weights = detail::UniformTensor<T>({in, out}, bound, rng);
  p.bias = Tensor<T>({out});
  detail::AttachAccumulators(p);
  return p;
}

template <class T>
LayerParams<T> MakeEmbedding(std::size_t rows, std::size_t dim, RngStream& rng) {
  LayerParams<T> p;
  p.kind = LayerKind::kEmbedding;
  p.weights = detail::UniformTensor<T>({rows, dim}, 0.05, rng);
  detail::AttachAccumulators(p);
  return p;
}

// ---------------------------------------------------------------------------
// Convolution: 3x3 kernel, stride 1, zero "same" padding.

namespace detail {

template <class T>
void CheckConv(const Shape& in, const LayerParams<T>& p) {
  if (p.kind != LayerKind::kConv3x3) throw ContractViolation("expected conv3x3 params");
  if (in.size() != 3) throw ContractViolation("conv input must be H x W x C");
  const Shape& w = p.weights.shape();
  if (w.size() != 4 || w[0] != 3 || w[1] != 3 || w[2] != in[2]) {
    throw ContractViolation("conv filter depth " + ShapeString(w) +
                            " does not match input " + ShapeString(in));
  }
}

#if defined(__GNUC__)
#define TAPKIT_HAVE_VECTOR_EXT 1
typedef float Float8 __attribute__((vector_size(32)));

inline Float8 Load8(const float* p) {
  Float8 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}
inline void Store8(float* p, Float8 v) { std::memcpy(p, &v, sizeof(v)); }

// (H+2) x (W+2) x C copy with a zero border.
inline std::vector<float> PadHwc(const float* in, std::size_t h, std::size_t w,
                                 std::size_t c) {
  const std::size_t pw = w + 2;
  std::vector<float> out((h + 2) * pw * c, 0.0f);
  for (std::size_t y = 0; y < h; ++y) {
    std::memcpy(&out[((y + 1) * pw + 1) * c], in + y * w * c, sizeof(float) * w * c);
  }
  return out;
}

// out = bias + conv(padded, weights); weights laid out [tap][cin][cout],
// cout a multiple of 8. Eight output pixels in flight per block so the FMA
// chains are independent.
template <std::size_t kBlock>
inline void Conv3x3PackedBlock(const float* padded, std::size_t pw, std::size_t cin,
                               const float* weights, std::size_t cout, std::size_t fb,
                               std::size_t y, std::size_t x, Float8 b, float* out,
                               std::size_t w) {
  Float8 acc[kBlock];
#pragma GCC unroll 8
  for (std::size_t i = 0; i < kBlock; ++i) acc[i] = b;
  for (std::size_t ky = 0; ky < 3; ++ky) {
    const float* row = padded + ((y + ky) * pw + x) * cin;
    for (std::size_t kx = 0; kx < 3; ++kx) {
      const float* wp = weights + (ky * 3 + kx) * cin * cout + fb;
      const float* ip = row + kx * cin;
      for (std::size_t c = 0; c < cin; ++c) {
        const Float8 wv = Load8(wp + c * cout);
#pragma GCC unroll 8
        for (std::size_t i = 0; i < kBlock; ++i) acc[i] += ip[i * cin + c] * wv;
      }
    }
  }
  float* o = out + (y * w + x) * cout + fb;
#pragma GCC unroll 8
  for (std::size_t i = 0; i < kBlock; ++i) Store8(o + i * cout, acc[i]);
}

inline void Conv3x3Packed(const float* padded, std::size_t h, std::size_t w,
                          std::size_t cin, const float* weights, const float* bias,
                          std::size_t cout, float* out) {
  const std::size_t pw = w + 2;
  for (std::size_t fb = 0; fb < cout; fb += 8) {
    const Float8 b = bias ? Load8(bias + fb) : Float8{};
    for (std::size_t y = 0; y < h; ++y) {
      std::size_t x = 0;
      for (; x + 8 <= w; x += 8) Conv3x3PackedBlock<8>(padded, pw, cin, weights, cout, fb, y, x, b, out, w);
      for (; x < w; ++x) Conv3x3PackedBlock<1>(padded, pw, cin, weights, cout, fb, y, x, b, out, w);
    }
  }
}

// dW[tap][c0 .. c0+kGroup)[fb .. fb+8) += sum over pixels of input * grad_out.
// All nine taps of the channel group are accumulated in one pass over
// grad_out.
template <std::size_t kGroup>
inline void Conv3x3WeightGradGroup(const float* padded, std::size_t h, std::size_t w,
                                   std::size_t cin, std::size_t c0, const float* grad_out,
                                   std::size_t cout, std::size_t fb, float* grad_w) {
  const std::size_t pw = w + 2;
  Float8 acc[9 * kGroup] = {};
  for (std::size_t y = 0; y < h; ++y) {
    const float* gp = grad_out + y * w * cout + fb;
    for (std::size_t x = 0; x < w; ++x) {
      const Float8 g = Load8(gp + x * cout);
#pragma GCC unroll 3
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const float* ip = padded + ((y + ky) * pw + x) * cin + c0;
#pragma GCC unroll 3
        for (std::size_t kx = 0; kx < 3; ++kx) {
#pragma GCC unroll 3
          for (std::size_t k = 0; k < kGroup; ++k) {
            acc[(ky * 3 + kx) * kGroup + k] += ip[kx * cin + k] * g;
          }
        }
      }
    }
  }
  for (std::size_t tap = 0; tap < 9; ++tap) {
    for (std::size_t k = 0; k < kGroup; ++k) {
      float* dst = grad_w + (tap * cin + c0 + k) * cout + fb;
      Store8(dst, Load8(dst) + acc[tap * kGroup + k]);
    }
  }
}

inline void Conv3x3WeightGradPacked(const float* padded, std::size_t h, std::size_t w,
                                    std::size_t cin, const float* grad_out,
                                    std::size_t cout, float* grad_w) {
  for (std::size_t fb = 0; fb < cout; fb += 8) {
    std::size_t c = 0;
    for (; c + 3 <= cin; c += 3) Conv3x3WeightGradGroup<3>(padded, h, w, cin, c, grad_out, cout, fb, grad_w);
    if (cin - c == 2) Conv3x3WeightGradGroup<2>(padded, h, w, cin, c, grad_out, cout, fb, grad_w);
    if (cin - c == 1) Conv3x3WeightGradGroup<1>(padded, h, w, cin, c, grad_out, cout, fb, grad_w);
  }
}
#endif

}  // namespace detail

template <class T>
Tensor<T> Conv3x3Forward(const Tensor<T>& in, const LayerParams<T>& p) {
  detail::CheckConv(in.shape(), p);
  const std::size_t h = in.dim(0), w = in.dim(1), cin = in.dim(2);
  const std::size_t cout = p.weights.dim(3);
  Tensor<T> out({h, w, cout});
#ifdef TAPKIT_HAVE_VECTOR_EXT
  if constexpr (std::is_same_v<T, float>) {
    if (cout % 8 == 0) {
      const auto padded = detail::PadHwc(in.data(), h, w, cin);
      detail::Conv3x3Packed(padded.data(), h, w, cin, p.weights.data(), p.bias.data(),
                            cout, out.data());
      return out;
    }
  }
#endif
  const T* wt = p.weights.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      T* o = &out.at(y, x, 0);
      for (std::size_t f = 0; f < cout; ++f) o[f] = p.bias[f];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + kx) - 1;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          const T* ip = &in.at(yy, xx, 0);
          const T* wp = wt + (ky * 3 + kx) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const T v = ip[c];
            for (std::size_t f = 0; f < cout; ++f) o[f] += v * wp[c * cout + f];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates into grads. grad_in may be null when the input gradient is not
// needed (first layer of a tower).
template <class T>
void Conv3x3Backward(const Tensor<T>& in, const LayerParams<T>& p,
                     const Tensor<T>& grad_out, LayerGrads<T>& grads,
                     std::type_identity_t<Tensor<T>>* grad_in) {
  detail::CheckConv(in.shape(), p);
  const std::size_t h = in.dim(0), w = in.dim(1), cin = in.dim(2);
  const std::size_t cout = p.weights.dim(3);
  if (grad_out.shape() != Shape{h, w, cout}) {
    throw ContractViolation("conv grad_out shape mismatch");
  }
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t f = 0; f < cout; ++f) grads.bias[f] += grad_out[i * cout + f];
  }
  if (grad_in != nullptr && grad_in->shape() != in.shape()) *grad_in = Tensor<T>(in.shape());
#ifdef TAPKIT_HAVE_VECTOR_EXT
  if constexpr (std::is_same_v<T, float>) {
    if (cout % 8 == 0 && (grad_in == nullptr || cin % 8 == 0)) {
      const auto padded = detail::PadHwc(in.data(), h, w, cin);
      detail::Conv3x3WeightGradPacked(padded.data(), h, w, cin, grad_out.data(), cout,
                                      grads.weights.data());
      if (grad_in != nullptr) {
        // Input gradient is a convolution of grad_out with the spatially
        // flipped, channel-transposed filters.
        std::vector<float> flipped(9 * cout * cin);
        for (std::size_t tap = 0; tap < 9; ++tap) {
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t f = 0; f < cout; ++f) {
              flipped[(tap * cout + f) * cin + c] =
                  p.weights[((8 - tap) * cin + c) * cout + f];
            }
          }
        }
        const auto gpad = detail::PadHwc(grad_out.data(), h, w, cout);
        std::vector<float> gin(h * w * cin);
        detail::Conv3x3Packed(gpad.data(), h, w, cout, flipped.data(), nullptr, cin,
                              gin.data());
        for (std::size_t i = 0; i < gin.size(); ++i) (*grad_in)[i] += gin[i];
      }
      return;
    }
  }
#endif
  T* gw = grads.weights.data();
  const T* wt = p.weights.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const T* g = &grad_out.at(y, x, 0);
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + kx) - 1;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          const T* ip = &in.at(yy, xx, 0);
          const std::size_t base = (ky * 3 + kx) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            T* gwc = gw + base + c * cout;
            const T* wc = wt + base + c * cout;
            T acc{0};
            for (std::size_t f = 0; f < cout; ++f) {
              gwc[f] += ip[c] * g[f];
              acc += wc[f] * g[f];
            }
            if (grad_in != nullptr) grad_in->at(yy, xx, c) += acc;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.

template <class T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output cell
};

template <class T>
PoolResult<T> MaxPool2x2Forward(const Tensor<T>& in) {
  if (in.rank() != 3 || in.dim(0) < 2 || in.dim(1) < 2) {
    throw ContractViolation("max pool needs H >= 2 and W >= 2, got " +
                            ShapeString(in.shape()));
  }
  const std::size_t h = in.dim(0) / 2, w = in.dim(1) / 2, c = in.dim(2);
  const std::size_t in_w = in.dim(1);
  PoolResult<T> r{Tensor<T>({h, w, c}), std::vector<std::uint32_t>(h * w * c)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((2 * y) * in_w + 2 * x) * c + ch;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * y + dy) * in_w + 2 * x + dx) * c + ch;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (y * w + x) * c + ch;
        r.output[o] = in[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <class T>
Tensor<T> MaxPool2x2Backward(const Tensor<T>& grad_out,
                             std::span<const std::uint32_t> argmax,
                             const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ContractViolation("pool argmax does not match grad_out");
  }
  Tensor<T> grad_in(input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[argmax[i]] += grad_out[i];
  return grad_in;
}

// ---------------------------------------------------------------------------
// Dense layer: out[j] = bias[j] + sum_i in[i] * W[i, j].

template <class T>
std::vector<T> DenseForward(std::span<const T> in, const LayerParams<T>& p) {
  if (p.kind != LayerKind::kDense || p.weights.rank() != 2) {
    throw ContractViolation("expected dense params");
  }
  const std::size_t n_in = p.weights.dim(0), n_out = p.weights.dim(1);
  if (in.size() != n_in) {
    throw ContractViolation("dense input length " + std::to_string(in.size()) +
                            " != " + std::to_string(n_in));
  }
  std::vector<T> out(p.bias.values().begin(), p.bias.values().end());
  const T* wt = p.weights.data();
  for (std::size_t i = 0; i < n_in; ++i) {
    const T v = in[i];
    if (v == T{0}) continue;
    const T* row = wt + i * n_out;
    for (std::size_t j = 0; j < n_out; ++j) out[j] += v * row[j];
  }
  return out;
}

// grad_in may be empty to skip the input gradient.
template <class T>
void DenseBackward(std::span<const T> in, const LayerParams<T>& p,
                   std::span<const T> grad_out, LayerGrads<T>& grads,
                   std::span<T> grad_in) {
  const std::size_t n_in = p.weights.dim(0), n_out = p.weights.dim(1);
  if (in.size() != n_in || grad_out.size() != n_out) {
    throw ContractViolation("dense backward length mismatch");
  }
  for (std::size_t j = 0; j < n_out; ++j) grads.bias[j] += grad_out[j];
  T* gw = grads.weights.data();
  const T* wt = p.weights.data();
  for (std::size_t i = 0; i < n_in; ++i) {
    const T v = in[i];
    if (v != T{0}) {
      T* row = gw + i * n_out;
      for (std::size_t j = 0; j < n_out; ++j) row[j] += v * grad_out[j];
    }
    if (!grad_in.empty()) {
      // Eight independent partial sums so the reduction vectorizes; the
      // summation order is fixed, so results stay deterministic.
      const T* wrow = wt + i * n_out;
      T lanes[8] = {};
      std::size_t j = 0;
      for (; j + 8 <= n_out; j += 8) {
        for (std::size_t k = 0; k < 8; ++k) lanes[k] += wrow[j + k] * grad_out[j + k];
      }
      for (; j < n_out; ++j) lanes[j % 8] += wrow[j] * grad_out[j];
      grad_in[i] += ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                    ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    }
  }
}

// ---------------------------------------------------------------------------

// Batched forms of the two functions above. Each weight row is read once for
// the whole batch, which matters when the weight matrix is larger than cache.
// Sums over the batch run in batch order.
template <class T>
std::vector<std::vector<T>> DenseForwardBatch(const std::vector<std::span<const T>>& in,
                                              const LayerParams<T>& p) {
  const std::size_t n_in = p.weights.dim(0), n_out = p.weights.dim(1);
  std::vector<std::vector<T>> out(in.size(),
                                  std::vector<T>(p.bias.values().begin(), p.bias.values().end()));
  for (const auto& x : in) {
    if (x.size() != n_in) throw ContractViolation("dense batch input length mismatch");
  }
  const T* wt = p.weights.data();
  for (std::size_t i = 0; i < n_in; ++i) {
    const T* row = wt + i * n_out;
    for (std::size_t b = 0; b < in.size(); ++b) {
      const T v = in[b][i];
      if (v == T{0}) continue;
      T* o = out[b].data();
      for (std::size_t j = 0; j < n_out; ++j) o[j] += v * row[j];
    }
  }
  return out;
}

template <class T>
void DenseBackwardBatch(const std::vector<std::span<const T>>& in, const LayerParams<T>& p,
                        const std::vector<std::span<const T>>& grad_out, LayerGrads<T>& grads,
                        const std::vector<std::span<T>>& grad_in) {
  const std::size_t n_in = p.weights.dim(0), n_out = p.weights.dim(1);
  const std::size_t batch = in.size();
  if (grad_out.size() != batch || (!grad_in.empty() && grad_in.size() != batch)) {
    throw ContractViolation("dense batch backward size mismatch");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (in[b].size() != n_in || grad_out[b].size() != n_out ||
        (!grad_in.empty() && grad_in[b].size() != n_in)) {
      throw ContractViolation("dense batch backward length mismatch");
    }
    for (std::size_t j = 0; j < n_out; ++j) grads.bias[j] += grad_out[b][j];
  }
  T* gw = grads.weights.data();
  const T* wt = p.weights.data();
  for (std::size_t i = 0; i < n_in; ++i) {
    T* grow = gw + i * n_out;
    const T* wrow = wt + i * n_out;
    for (std::size_t b = 0; b < batch; ++b) {
      const T v = in[b][i];
      const T* g = grad_out[b].data();
      if (v != T{0}) {
        for (std::size_t j = 0; j < n_out; ++j) grow[j] += v * g[j];
      }
      if (!grad_in.empty()) {
        T lanes[8] = {};
        std::size_t j = 0;
        for (; j + 8 <= n_out; j += 8) {
          for (std::size_t k = 0; k < 8; ++k) lanes[k] += wrow[j + k] * g[j + k];
        }
        for (; j < n_out; ++j) lanes[j % 8] += wrow[j] * g[j];
        grad_in[b][i] += ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
      }
    }
  }
}

template <class T>
void ReluInPlace(std::span<T> x) {
  for (T& v : x) v = v > T{0} ? v : T{0};
}

template <class T>
Tensor<T> Relu(Tensor<T> x) {
  ReluInPlace(x.values());
  return x;
}

// Zeroes grad wherever the ReLU output was not positive.
template <class T>
void ReluBackward(std::span<const T> activated, std::span<T> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activated[i] > T{0})) grad[i] = T{0};
  }
}

// ---------------------------------------------------------------------------

template <class T>
std::vector<T> EmbeddingForward(std::size_t index, const LayerParams<T>& p) {
  if (p.kind != LayerKind::kEmbedding) throw ContractViolation("expected embedding params");
  const std::size_t rows = p.weights.dim(0), dim = p.weights.dim(1);
  if (index >= rows) {
    throw ContractViolation("embedding index " + std::to_string(index) +
                            " out of range (rows=" + std::to_string(rows) + ")");
  }
  const T* row = p.weights.data() + index * dim;
  return std::vector<T>(row, row + dim);
}

template <class T>
void EmbeddingBackward(std::size_t index, std::span<const T> grad_out,
                       LayerGrads<T>& grads) {
  const std::size_t dim = grads.weights.dim(1);
  T* row = grads.weights.data() + index * dim;
  for (std::size_t j = 0; j < dim; ++j) row[j] += grad_out[j];
}

// ---------------------------------------------------------------------------
// Inverted dropout. Returns the per-element multipliers (0 or 1/(1-rate)) so
// the backward pass can replay them; empty when the pass was an identity.

template <class T>
std::vector<T> DropoutInPlace(std::span<T> x, double rate, Mode mode, RngStream& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractViolation("dropout rate must be in [0,1)");
  if (mode == Mode::kInfer || rate == 0.0) return {};
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.Uniform() < rate ? T{0} : scale;
    x[i] *= mask[i];
  }
  return mask;
}

template <class T>
Tensor<T> Dropout(Tensor<T> x, double rate, Mode mode, RngStream& rng) {
  DropoutInPlace(x.values(), rate, mode, rng);
  return x;
}

template <class T>
void DropoutBackward(std::span<T> grad, std::span<const T> mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask[i];
}

// ---------------------------------------------------------------------------

inline double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct LossResult {
  double loss;
  double dloss_dlogit;
};

// Stable form: max(z,0) - z*y + log(1 + exp(-|z|)).
inline LossResult SigmoidCrossEntropy(double logit, int label) {
  if (label != 0 && label != 1) throw ContractViolation("label must be 0 or 1");
  const double y = label;
  const double loss =
      std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
  return {loss, Sigmoid(logit) - y};
}

// ---------------------------------------------------------------------------

inline constexpr double kAdagradEpsilon = 1e-8;

namespace detail {

template <class T>
void AdagradUpdate(Tensor<T>& w, Tensor<T>& accum, const Tensor<T>& g, double lr,
                   const char* what) {
  if (g.shape() != w.shape()) {
    throw ContractViolation(std::string("adagrad: gradient shape mismatch for ") + what);
  }
  if (accum.shape() != w.shape()) accum = Tensor<T>(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw TrainingError(std::string("nonfinite gradient in ") + what + " at index " +
                          std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    accum[i] += g[i] * g[i];
    w[i] -= static_cast<T>(lr * g[i] / (std::sqrt(static_cast<double>(accum[i])) +
                                        kAdagradEpsilon));
  }
}

}  // namespace detail

template <class T>
void AdagradStep(LayerParams<T>& p, const LayerGrads<T>& g, double lr) {
  detail::AdagradUpdate(p.weights, p.weight_accum, g.weights, lr, "weights");
  if (!p.bias.empty()) detail::AdagradUpdate(p.bias, p.bias_accum, g.bias, lr, "bias");
}

}  // namespace tapkit::nn

#endif  // TAPKIT_NN_LAYERS_H_
