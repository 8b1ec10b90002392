#include <iostream>

#include "cavspin/cli.hpp"

int main(int argc, char** argv) { return cavspin::cli::main(argc, argv, std::cout, std::cerr); }
