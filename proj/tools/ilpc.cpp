#include "ilpc/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ilpc::run_cli(argc, argv, std::cout, std::cerr); }
