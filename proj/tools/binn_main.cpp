#include "binn/cli.hpp"

int main(int argc, char** argv) { return binn::run_cli(argc, argv); }
