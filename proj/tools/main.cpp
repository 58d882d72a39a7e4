#include "gpa3d/cli.hpp"

int main(int argc, char** argv) { return gpa3d::cli_main(argc, argv); }
