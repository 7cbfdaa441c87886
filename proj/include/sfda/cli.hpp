/* Copyright 2026 The sfda Authors

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
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sfda {

// Exit codes of the command-line tool.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Environment variable naming the default root for run directories.
constexpr const char* kRunRootEnv = "SFDA_RUN_ROOT";

// Runs one command line (args[0] is the program name). Results go to `out`,
// progress and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace sfda
