#include "vbcv/cli.hpp"

int main(int argc, char** argv) { return vbcv::cli::main(argc, argv); }
