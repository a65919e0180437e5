#include <iostream>

#include "levelnavi/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return levelnavi::run_cli(args, std::cout, std::cerr);
}
