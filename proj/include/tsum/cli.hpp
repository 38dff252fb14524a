#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsum/gradients.hpp"

namespace tsum {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

struct CliHooks {
  /// Applied to analytic gradients in `gradcheck` before comparison.
  std::function<void(GradientSet&)> tamper;
  std::ostream* out = nullptr;  // default std::cout
  std::ostream* err = nullptr;  // default std::cerr
};

/// Entry point of the `tsum` command; returns the process exit code.
int run_cli(const std::vector<std::string>& args, const CliHooks& hooks = {});

}  // namespace tsum
