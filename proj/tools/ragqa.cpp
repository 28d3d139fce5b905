#include "ragqa/cli.hpp"

int main(int argc, char** argv) { return ragqa::cli::run(argc, argv); }
