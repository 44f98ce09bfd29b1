#include <iostream>

#include "admmsdp/cli.hpp"

int main(int argc, char** argv) {
  return admmsdp::cli::run_cli(argc, argv, std::cout, std::cerr);
}
