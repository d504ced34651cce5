#include <vector>

#include "msgfield/cli.hpp"

int main(int argc, char** argv) {
  return msgfield::run_cli(std::vector<std::string>(argv, argv + argc));
}
