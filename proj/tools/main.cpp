#include <iostream>
#include <string>
#include <vector>

#include "bytet5/cli.hpp"

extern char** environ;

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bytet5::cli::run(args, std::cout, std::cerr, std::cin, environ);
}
