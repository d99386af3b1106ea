#include <iostream>

#include "prognet/app/cli.hpp"

int main(int argc, char** argv) {
    return prognet::app::run_cli(argc, argv, std::cout, std::cerr);
}
