#include <iostream>

#include "nptraj/cli.hpp"

int main(int argc, char** argv) { return nptraj::run_cli(argc, argv, std::cout, std::cerr); }
