#include "qdqn/cli.hpp"

int main(int argc, char** argv) { return qdqn::run_cli(argc, argv); }
