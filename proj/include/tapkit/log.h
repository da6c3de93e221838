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

#ifndef TAPKIT_LOG_H_
#define TAPKIT_LOG_H_

#include <spdlog/spdlog.h>

namespace tapkit {

// Returns the shared stderr logger. Verbosity comes from the TAPKIT_LOG
// environment variable (trace, debug, info, warn, error, off); default warn.
spdlog::logger& logger();

}  // namespace tapkit

#endif  // TAPKIT_LOG_H_
