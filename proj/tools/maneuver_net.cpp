#include "maneuver/cli/commands.hpp"

int main(int argc, char** argv) { return maneuver::cli::dispatch(argc, argv); }
