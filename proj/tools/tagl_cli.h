/* Copyright 2026 The TAGL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef TAGL_TOOLS_TAGL_CLI_H_
#define TAGL_TOOLS_TAGL_CLI_H_

#include <string>
#include <vector>

namespace tagl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `tagl` executable. Returns the process exit code.
int run(const std::vector<std::string>& args);

}  // namespace tagl::cli

#endif  // TAGL_TOOLS_TAGL_CLI_H_
