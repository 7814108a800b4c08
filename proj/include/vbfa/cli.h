// vbfa/cli.h

// Copyright 2026  The vbfa authors
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

#ifndef VBFA_CLI_H_
#define VBFA_CLI_H_

#include <string>
#include <vector>

namespace vbfa {

// Command-line entry point (subcommands: synth, acc-stats, train, extract,
// lb-report).  Returns 0 on success, 1 on usage errors, 2 on data or numeric
// errors.
int run_cli(int argc, const char *const *argv);

// Same, for callers that assemble arguments programmatically (argv[0] is
// supplied internally).
int run_cli(const std::vector<std::string> &args);

}  // namespace vbfa

#endif  // VBFA_CLI_H_
