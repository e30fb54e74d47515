#include <string>
#include <vector>

#include "vcgsa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vcgsa::run_cli(args);
}
