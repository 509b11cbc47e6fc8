#include "slt/cli/commands.hpp"

int main(int argc, char** argv) { return slt::cli::run_cli(std::vector<std::string>(argv, argv + argc)); }
