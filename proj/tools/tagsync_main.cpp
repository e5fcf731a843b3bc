#include "tagsync/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return tagsync::run_cli(argc, argv, std::cout, std::cerr); }
