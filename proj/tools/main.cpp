#include "unitdiff/cli.hpp"

int main(int argc, char** argv) { return unitdiff::run_cli(argc, argv); }
