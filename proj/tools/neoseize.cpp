#include "neoseize/cli.hpp"

int main(int argc, char** argv) { return neoseize::run_cli(argc, argv); }
