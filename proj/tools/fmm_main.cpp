#include <iostream>

#include "fmm/experiments.hpp"

int main(int argc, char** argv) { return fmm::run_cli(argc, argv, std::cout, std::cerr); }
