#include "hdrsr/cli.hpp"

int main(int argc, char** argv) { return hdrsr::cli_main(argc, argv); }
