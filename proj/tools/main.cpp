#include <iostream>

#include "stackvet/cli.hpp"

int main(int argc, char** argv) { return stackvet::run_cli(argc, argv, std::cout, std::cerr); }
