#include "manifold_probe/commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return manifold_probe::run_cli(argc, argv, std::cout, std::cerr);
}
