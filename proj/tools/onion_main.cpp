#include <iostream>
#include <string>
#include <vector>

#include "onion/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return onion::cli::run(args, std::cout, std::cerr);
}
