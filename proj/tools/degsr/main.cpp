#include <iostream>

#include "degsr/cli.hpp"

int main(int argc, char** argv) { return degsr::run_cli(argc, argv, std::cout, std::cerr); }
