#include "ttnheom/cli.hpp"

int main(int argc, char** argv) { return ttnheom::cli::main(argc, argv); }
