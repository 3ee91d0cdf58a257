#include <iostream>
#include <string>
#include <vector>

#include "localprompt/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return lp::run_cli(args, std::cout, std::cerr);
}
