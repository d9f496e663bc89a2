#include <iostream>
#include <string>
#include <vector>

#include "micp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return micp::run_cli(args, std::cout, std::cerr);
}
