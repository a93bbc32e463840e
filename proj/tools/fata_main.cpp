#include "cli/cli.hpp"

int main(int argc, char** argv) { return fata::cli::dispatch(argc, argv); }
