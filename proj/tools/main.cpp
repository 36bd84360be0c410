#include "protex/cli.hpp"

int main(int argc, char** argv) { return protex::cli::run(argc, argv); }
