#include "kabi/cli.hpp"

int main(int argc, char** argv) { return kabi::cli::main(argc, argv); }
