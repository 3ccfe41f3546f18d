#include <string>
#include <vector>

#include "engram/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return engram::cli::cli_main(std::move(args));
}
