#include <iostream>

#include "dense/cli.hpp"

int main(int argc, char** argv) { return dense::run_cli(argc, argv, std::cout, std::cerr); }
