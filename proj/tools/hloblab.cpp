#include "hloblab/cli.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return hloblab::cli::dispatch(args, std::cout, std::cerr, [](const char* name) { return std::getenv(name); });
}
