#include "cli_app.hpp"

int main(int argc, char** argv) { return consense::cli::run(argc, argv); }
