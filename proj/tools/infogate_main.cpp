#include <vector>

#include "ig/io/cli.hpp"

int main(int argc, char** argv) {
  return ig::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
