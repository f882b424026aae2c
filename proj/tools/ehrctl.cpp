#include <iostream>
#include <string>
#include <vector>

#include "ehr/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ehr::cli::execute(args, std::cin, std::cout, std::cerr);
}
