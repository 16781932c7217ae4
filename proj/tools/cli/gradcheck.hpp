#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gramtex::cli {

struct GradCheckResult {
  std::string module;
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = false;
};

inline constexpr double kGradTolerance = 1e-4;

/// Module names accepted by run_gradcheck besides "all".
std::vector<std::string> gradcheck_modules();

/// Finite-difference suites on seeded random instances. `corrupt` scales
/// every analytic gradient by (1 + corrupt), which a correct suite must flag.
/// Throws InvalidArgument for an unknown module.
std::vector<GradCheckResult> run_gradcheck(std::string_view module, std::uint64_t seed,
                                           double corrupt = 0.0);

}  // namespace gramtex::cli
