#include "hydro_embed/cli.hpp"

int main(int argc, char** argv) { return hydro_embed::cli::run(argc, argv); }
