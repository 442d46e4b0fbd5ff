#include "drcurve/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
  return drcurve::cli::run(argc, argv, std::cout, std::cerr);
}
