#include "hqlab/cli.hpp"

int main(int argc, char** argv) { return hqlab::run_cli(argc, argv); }
