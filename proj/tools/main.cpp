#include <iostream>
#include <string>
#include <vector>

#include "rgfm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rgfm::cli::run_cli(args, std::cerr);
}
