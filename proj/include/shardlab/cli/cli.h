/* Copyright 2026 The Shardlab Authors. All Rights Reserved.

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

#ifndef SHARDLAB_CLI_CLI_H_
#define SHARDLAB_CLI_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace shardlab::cli {

enum ExitCode {
  kExitPass = 0,
  kExitMismatch = 1,
  kExitInvalid = 2,   // parse, flag or validation error
  kExitInternal = 3,  // any other pass failure
};

// Runs one command. `args` excludes the program name; `in` backs the
// input when no path (or "-") is given.
int Run(const std::vector<std::string>& args, std::istream& in,
        std::ostream& out, std::ostream& err);

}  // namespace shardlab::cli

#endif  // SHARDLAB_CLI_CLI_H_
