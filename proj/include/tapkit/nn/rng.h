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

#ifndef TAPKIT_NN_RNG_H_
#define TAPKIT_NN_RNG_H_

#include <cstdint>
#include <iterator>
#include <string_view>
#include <utility>

namespace tapkit::nn {

// Counter-based generator: the i-th output is a fixed 64-bit mixing function
// of (key, i). Integer-only, so a given seed yields the same sequence on
// every platform and compiler. split() derives independent child streams.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), key_(Mix(seed ^ kSeedSalt)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t NextU64() {
    const std::uint64_t x = key_ + (++counter_) * kGolden;
    return Mix(Mix(x));
  }

  // Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t Below(std::uint64_t n) {
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t r;
    do {
      r = NextU64();
    } while (r >= limit);
    return r % n;
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Child stream keyed by an integer; does not advance this stream.
  RngStream Split(std::uint64_t stream_id) const {
    return RngStream(Mix(key_ ^ Mix(stream_id + kGolden)));
  }

  // Child stream keyed by a string (FNV-1a of the bytes).
  RngStream Split(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return Split(h);
  }

  // Fisher-Yates.
  template <class RandomIt>
  void Shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(std::distance(first, last));
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = Below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kSeedSalt = 0x5851F42D4C957F2DULL;

  static constexpr std::uint64_t Mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace tapkit::nn

#endif  // TAPKIT_NN_RNG_H_
