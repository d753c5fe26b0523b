#include <iostream>

#include "causalseg/cli.hpp"

int main(int argc, char** argv) { return causalseg::run_cli(argc, argv, std::cout, std::cerr); }
