#include <iostream>

#include "gittins_lab/cli.hpp"

int main(int argc, char** argv) { return gittins_lab::run_cli(argc, argv, std::cout, std::cerr); }
