#include "hopqa/commands.hpp"

int main(int argc, char** argv) { return hopqa::run_cli(argc, argv); }
