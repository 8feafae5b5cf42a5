#include "fsga/cli.hpp"

int main(int argc, char** argv) { return fsga::cli::dispatch(argc, argv); }
