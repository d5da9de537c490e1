#include "rpl/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return rpl::run_cli(argc, argv, std::cout, std::cerr); }
