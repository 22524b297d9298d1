#include "lungsound/cli.hpp"

int main(int argc, char** argv) { return lungsound::cli::run(argc, argv); }
