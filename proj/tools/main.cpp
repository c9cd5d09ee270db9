#include "clozegen/orchestrator.hpp"

int main(int argc, char** argv) { return clozegen::orchestrator::run_cli(argc, argv); }
