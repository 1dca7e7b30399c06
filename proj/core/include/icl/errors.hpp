#pragma once

#include <exception>
#include <stdexcept>

namespace icl {

// CLI exit codes: 0 success, 1 invariant failure, 2 config error,
// 3 numeric divergence/singularity.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 1;
}

}  // namespace icl
