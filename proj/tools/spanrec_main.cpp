#include "spanrec/cli.hpp"

int main(int argc, char** argv) { return spanrec::run_cli(argc, argv); }
