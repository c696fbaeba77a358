#include <iostream>

#include "pit/cli.hpp"

int main(int argc, char** argv) { return pit::run_cli(argc, argv, std::cout, std::cerr); }
