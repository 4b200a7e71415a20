#include <iostream>

#include "magmeta/cli_io.hpp"

int main(int argc, char** argv) { return magmeta::cli_dispatch(argc, argv, std::cout, std::cerr); }
