#include "mfrbsde/cli.hpp"

int main(int argc, char** argv) { return mfrbsde::cli::main(argc, argv); }
