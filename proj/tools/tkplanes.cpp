#include "tkp/cli.hpp"

int main(int argc, char** argv) { return tkp::run_cli(argc, argv); }
