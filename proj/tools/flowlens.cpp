#include "flowlens/cli.hpp"

int main(int argc, char** argv) { return flowlens::cli::run(argc, argv); }
