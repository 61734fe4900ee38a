#include <iostream>

#include "cgrag/cli.hpp"

int main(int argc, char** argv) { return cgrag::run_cli(argc, argv, std::cout, std::cerr); }
