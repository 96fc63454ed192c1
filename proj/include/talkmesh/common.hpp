#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace talkmesh {

// Process exit codes used by the CLI. Library code throws the matching
// exception type; main() translates.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitIoError = 3,
  kExitNumericError = 4,
  kExitInputError = 5,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline torch::TensorOptions opts(torch::Dtype dtype) {
  return torch::TensorOptions().dtype(dtype);
}

inline void require_finite(const torch::Tensor& t, const std::string& what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw NumericError("non-finite values in " + what);
  }
}

}  // namespace talkmesh
