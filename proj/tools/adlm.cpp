#include "adlm/cli.hpp"

int main(int argc, char** argv) { return adlm::cli::run(argc, argv); }
