// censorkit command-line entry point. Subcommands: fairness, search, image,
// audit. See README.md for config schema, outputs and exit codes.
#include <iostream>

int main() {
    std::cerr << "censorkit: not yet wired\n";
    return 1;
}
