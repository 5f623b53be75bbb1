#include <iostream>

#include "meibo/commands.hpp"

int main(int argc, char** argv) { return meibo::cli::run(argc, argv, std::cout, std::cerr); }
