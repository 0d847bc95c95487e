#include "scino/cli/app.hpp"

int main(int argc, char** argv) { return scino::cli::run(argc, argv); }
