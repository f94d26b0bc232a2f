#include "sensprune/cli.h"

int main(int argc, char** argv) { return sensprune::cli::run(argc, argv); }
