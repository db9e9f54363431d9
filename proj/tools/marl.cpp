#include "marl/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return marl::run_cli({argv, argv + argc}, std::cout, std::cerr); }
