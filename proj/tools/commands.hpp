// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef DLKA_TOOLS_COMMANDS_HPP_
#define DLKA_TOOLS_COMMANDS_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "dlka/train.hpp"

namespace dlka::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kValidation = 3,
  kDivergence = 4,
};

// Parses argv and runs one subcommand. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// image_NNNN.dlkv / label_NNNN.dlkv pairs.
void save_dataset(const std::string& dir, const std::vector<Sample>& data);
std::vector<Sample> load_dataset(const std::string& dir);

}  // namespace dlka::cli

#endif  // DLKA_TOOLS_COMMANDS_HPP_
