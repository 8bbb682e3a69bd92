#include "citynav/cli.hpp"

int main(int argc, char** argv) { return citynav::cli_main(argc, argv); }
