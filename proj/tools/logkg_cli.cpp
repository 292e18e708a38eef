#include "logkg/cli.hpp"

int main(int argc, char** argv) { return logkg::cli(argc, argv); }
