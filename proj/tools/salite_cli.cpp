#include "salite/cli.hpp"

int main(int argc, char** argv) { return salite::run_cli(argc, argv); }
