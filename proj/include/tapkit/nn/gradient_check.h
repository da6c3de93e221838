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

#ifndef TAPKIT_NN_GRADIENT_CHECK_H_
#define TAPKIT_NN_GRADIENT_CHECK_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "tapkit/errors.h"
#include "tapkit/nn/tensor.h"

namespace tapkit::nn {

// One parameter tensor and the analytic gradient computed for it.
struct GradientSlot {
  Tensor<double>* value;
  const Tensor<double>* analytic;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Compares analytic gradients against central differences of `loss` for
// every entry of every slot. `loss` must read the parameters through the
// slot pointers and be deterministic (dropout off). Relative error is
// |a - n| / max(|a|, |n|, 1e-8).
inline GradientCheckResult GradientCheck(std::span<const GradientSlot> slots,
                                         const std::function<double()>& loss,
                                         double step = 1e-5) {
  GradientCheckResult result;
  for (const GradientSlot& slot : slots) {
    if (slot.value->shape() != slot.analytic->shape()) {
      throw ContractViolation("gradient slot shape mismatch");
    }
    for (std::size_t i = 0; i < slot.value->size(); ++i) {
      double& theta = (*slot.value)[i];
      const double saved = theta;
      theta = saved + step;
      const double plus = loss();
      theta = saved - step;
      const double minus = loss();
      theta = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = (*slot.analytic)[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace tapkit::nn

#endif  // TAPKIT_NN_GRADIENT_CHECK_H_
