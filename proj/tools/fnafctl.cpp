#include "fnaf/cli.hpp"

int main(int argc, char** argv) { return fnaf::cli::run(argc, argv); }
