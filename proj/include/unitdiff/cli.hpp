#pragma once

#include <iosfwd>

namespace unitdiff {

// Subcommands: make-codebook, gen-data, train, eval, curves {knn-accuracy,
// intermediate}. Returns the process exit code.
int run_cli(int argc, char** argv);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace unitdiff
