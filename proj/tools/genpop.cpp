#include "genpop/cli.hpp"

int main(int argc, char** argv) { return genpop::run_cli(argc, argv); }
