#include <iostream>

#include "heapguard/cli.hpp"

int main(int argc, char** argv) {
  return heapguard::run_cli(argc, argv, std::cout, std::cerr, std::cin);
}
