#include <iostream>

#include "dragforge/cli.hpp"

int main(int argc, char** argv) { return dragforge::cli::run(argc, argv, std::cout, std::cerr); }
