#include "mvgamlss/cli.hpp"

int main(int argc, char** argv) { return mvgamlss::run_cli(argc, argv); }
