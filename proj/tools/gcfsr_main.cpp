#include <iostream>

#include "gcfsr/cli.hpp"

int main(int argc, char** argv) { return gcfsr::run_cli(argc, argv, std::cout, std::cerr); }
