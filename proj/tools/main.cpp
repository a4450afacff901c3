// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "cli.hpp"
#include "ssnmt/runtime.hpp"

int main(int argc, char** argv) {
  ssnmt::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return ssnmt::cli::run(args, std::cout, std::cerr);
}
