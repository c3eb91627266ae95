// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "vme/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return vme::run_cli(args, std::cout, std::cerr);
}
