#include "udtsep/cli.hpp"

int main(int argc, char** argv) { return udtsep::run_cli(argc, argv); }
