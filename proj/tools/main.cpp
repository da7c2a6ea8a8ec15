#include "warpfield/cli.hpp"

int main(int argc, char** argv) { return warpfield::cli_main(argc, argv); }
