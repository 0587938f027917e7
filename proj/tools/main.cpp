#include "optnet/cli.hpp"

int main(int argc, char** argv) { return optnet::cli_main(argc, argv); }
