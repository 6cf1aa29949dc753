#include "pipeline/commands.hpp"

int main(int argc, char** argv) { return hwm::cli::run_cli(argc, argv); }
