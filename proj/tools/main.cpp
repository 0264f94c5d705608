#include "cli.hpp"

int main(int argc, char** argv) { return fsoacq::cli::main_entry(argc, argv); }
