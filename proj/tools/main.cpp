#include <iostream>
#include <string>
#include <vector>

#include "twozone/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return twozone::run_cli(args, std::cout, std::cerr);
}
