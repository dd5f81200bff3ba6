#include <iostream>

#include "crossover/cli.hpp"

int main(int argc, char** argv) {
    return crossover::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
