#include "commands.hpp"

int main(int argc, char** argv) { return cusumrl::cli::run(argc, argv); }
