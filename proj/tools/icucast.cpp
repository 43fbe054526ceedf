#include "icucast/cli.hpp"

int main(int argc, char** argv) { return icucast::cli::run(argc, argv); }
