#include <iostream>

#include "simshear/cli.h"

int main(int argc, char** argv) { return simshear::cli::dispatch(argc, argv, std::cout, std::cerr); }
