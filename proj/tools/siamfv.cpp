#include "siamfv/cli.hpp"

int main(int argc, char** argv) { return siamfv::cli::main_entry(argc, argv); }
