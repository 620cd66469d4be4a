#include "slowsem/cli.hpp"

int main(int argc, char** argv) { return slowsem::run_cli(argc, argv); }
