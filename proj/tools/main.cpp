#include <iostream>

#include "adrs/pipeline.hpp"

int main(int argc, char** argv) { return adrs::run_cli(argc, argv, std::cout, std::cerr); }
