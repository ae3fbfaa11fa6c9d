#include <string>
#include <vector>

#include "alod/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return alod::cli::run(args);
}
