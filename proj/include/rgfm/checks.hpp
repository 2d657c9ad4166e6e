#pragma once

// Property suites behind the selfcheck command. Each suite draws random
// cases from a fixed seed and compares the library against an independent
// route (descent for midpoints, per-source transport for bundle
// convolution, finite differences for gradients).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rgfm {

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst = 0.0;      // largest observed error
  double tolerance = 0.0;  // bound the error was held to
  double seconds = 0.0;

  bool passed() const { return failures == 0; }
};

struct SelfcheckOptions {
  std::uint64_t seed = 1;
  /// Scales the case counts of the random suites (1 = full size).
  double scale = 1.0;
};

SuiteResult check_manifold_linear(const SelfcheckOptions& options);
SuiteResult check_midpoint(const SelfcheckOptions& options);
SuiteResult check_exp_log(const SelfcheckOptions& options);
SuiteResult check_transport(const SelfcheckOptions& options);
SuiteResult check_distance_symmetry(const SelfcheckOptions& options);
SuiteResult check_bundle_convolution(const SelfcheckOptions& options);
SuiteResult check_unidirectionality(const SelfcheckOptions& options);
SuiteResult check_gradients(const SelfcheckOptions& options);

/// Every suite above, in order.
std::vector<SuiteResult> run_selfcheck(const SelfcheckOptions& options = {});

}  // namespace rgfm
