#include "saco/cli.hpp"

int main(int argc, char** argv) { return saco::cli::dispatch(argc, argv); }
