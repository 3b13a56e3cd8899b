#include <string>
#include <vector>

#include "trisim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return trisim::run_cli(args);
}
