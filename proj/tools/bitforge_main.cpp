#include <iostream>

#include "bitforge/cli.hpp"

int main(int argc, char** argv) { return bitforge::cli::run(argc, argv, std::cout, std::cerr); }
