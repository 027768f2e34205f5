#include <iostream>

#include "melstorm/cli.hpp"

int main(int argc, char** argv) {
  return melstorm::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
