#include <iostream>
#include <string>
#include <vector>

#include "ragit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ragit::cli::run(args, std::cout, std::cerr);
}
