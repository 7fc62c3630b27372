#include "sep/cli.hpp"

int main(int argc, char** argv) { return sep::run_cli(argc, argv); }
