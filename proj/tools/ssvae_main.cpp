#include "ssvae/cli.hpp"

int main(int argc, char** argv) { return ssvae::cli_main(argc, argv); }
