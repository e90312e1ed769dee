#include "svar/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return svar::cli::run(argc, argv, std::cout, std::cerr); }
