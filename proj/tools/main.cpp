#include <string>
#include <vector>

#include "tsum/cli.hpp"

int main(int argc, char** argv) {
  tsum::CliHooks hooks;
#ifdef TSUM_FAULTY_GRADIENTS
  // Test build only: corrupts one duration gradient so gradcheck must fail.
  hooks.tamper = [](tsum::GradientSet& g) {
    if (!g.d_C.empty()) g.d_C.front() = g.d_C.front() * 1.5 + 1e-3;
  };
#endif
  return tsum::run_cli(std::vector<std::string>(argv + 1, argv + argc), hooks);
}
