#include <iostream>

#include "rsfl/cli.hpp"

int main(int argc, char** argv) { return rsfl::cli::run_cli(argc, argv, std::cout, std::cerr); }
