#include "cli.hpp"

int main(int argc, char** argv) { return lart::cli::run_cli(argc, argv); }
