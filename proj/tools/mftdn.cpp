#include "mftdn/cli.hpp"

int main(int argc, char** argv) { return mftdn::run_cli(argc, argv); }
