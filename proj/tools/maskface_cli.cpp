#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "maskface/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::optional<std::string> env_seed;
  if (const char* s = std::getenv("MASKFACE_SEED")) env_seed = s;
  return maskface::run_cli(args, std::cout, std::cerr, env_seed);
}
