#include "piano/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return piano::cli::run(argc, argv, std::cout, std::cerr); }
