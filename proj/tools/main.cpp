#include "commands.hpp"

int main(int argc, char** argv) { return hmfg::cli::run(argc, argv); }
