#include <iostream>
#include <string>
#include <vector>

#include "sbi/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return sbi::cli::dispatch(args, std::cout, std::cerr);
}
