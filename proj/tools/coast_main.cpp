#include <iostream>
#include <string>
#include <vector>

#include "coast/cli.hpp"

int main(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return coast::cli::run(args, std::cout, std::cerr);
}
