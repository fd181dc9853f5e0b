#include "cli.hpp"

int main(int argc, char** argv) { return modelmon::cli::dispatch(argc, argv); }
