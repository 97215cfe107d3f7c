#include <iostream>
#include <string>
#include <vector>

#include "shiftmoment/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return shiftmoment::run_cli(args, std::cout, std::cerr);
}
