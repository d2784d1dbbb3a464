#include "subspec/cli.hpp"

int main(int argc, char** argv) { return subspec::run_cli(argc, argv); }
