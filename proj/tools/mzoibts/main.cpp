#include "mzoib/cli.hpp"

int main(int argc, char** argv) { return mzoib::cli::run(argc, argv); }
