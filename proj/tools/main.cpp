// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  return dlka::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout,
                        std::cerr);
}
