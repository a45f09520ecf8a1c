#include <iostream>

#include "tfde/cli.hpp"

int main(int argc, char** argv)
{
    return tfde::run_cli(argc, argv, std::cout, std::cerr);
}
