#include "spoiler/cli.hpp"

int main(int argc, char** argv) {
  return spoiler::cli::run(argc, argv);
}
