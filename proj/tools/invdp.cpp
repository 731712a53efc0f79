#include "invdp/cli.hpp"

int main(int argc, char** argv) { return invdp::cli::main(argc, argv); }
