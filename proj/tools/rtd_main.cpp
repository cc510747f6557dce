#include "rtd/cli.hpp"

int main(int argc, char** argv) { return rtd::cli::main_entry(argc, argv); }
