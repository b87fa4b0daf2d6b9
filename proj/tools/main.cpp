#include <string>
#include <vector>

#include "sandlab/experiment.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sandlab::cli_main(args);
}
