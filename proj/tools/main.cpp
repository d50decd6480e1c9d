#include "cli_app.hpp"

int main(int argc, char** argv) { return dytb::cli::run_cli(argc, argv); }
