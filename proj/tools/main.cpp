#include <iostream>
#include <string>
#include <vector>

#include "vocbf/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vocbf::run_cli(args, std::cout, std::cerr);
}
