#include <compose/cli.hpp>

int main(int argc, char** argv) { return compose::run_cli(argc, argv); }
