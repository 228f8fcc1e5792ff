#include <iostream>

#include "ventbench/cli.hpp"

int main(int argc, char** argv) {
  return ventbench::parse_and_dispatch(argc, argv, std::cout, std::cerr);
}
