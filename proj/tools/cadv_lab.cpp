#include "cadv/harness.hpp"

int main(int argc, char** argv) { return cadv::run_cli(argc, argv); }
