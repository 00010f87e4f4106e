#include <jcsh/cli.hpp>

int main(int argc, char** argv) { return jcsh::cli_main(argc, argv); }
