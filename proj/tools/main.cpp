#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  spamri::cli::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return spamri::cli::dispatch(args, std::cout, std::cerr);
}
