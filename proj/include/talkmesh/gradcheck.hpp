#pragma once

#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace talkmesh {
namespace gradcheck {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst_ratio = 0.0;  // max |analytic - fd| / (atol + rtol * scale); pass <=> <= 1
  std::int64_t coordinates = 0;
};

struct CheckOptions {
  double rtol = 1e-4;
  double atol = 1e-7;
  double eps = 1e-5;
  /// Coordinates checked per tensor; <= 0 checks every coordinate.
  std::int64_t max_coords_per_tensor = 0;
  std::uint64_t seed = 7;
  /// Analytic gradients are multiplied by this before comparison; the
  /// negative control sets it != 1 and expects a failure.
  double corruption = 1.0;
  /// Expected ratio analytic/fd (the gradient-reversal check uses -alpha_c).
  double analytic_over_fd = 1.0;
};

/// Central-difference comparison of autograd gradients of fn() against
/// finite differences w.r.t. the given leaf tensors (float64).
CheckResult check_gradients(const std::string& name,
                            const std::function<torch::Tensor()>& fn,
                            const std::vector<torch::Tensor>& inputs,
                            const CheckOptions& options = {});

/// The full registry: every training loss, the graph attention layer, each
/// encoder block and one decoder step, on small float64 fixtures.
std::vector<CheckResult> run_all(const CheckOptions& options = {});

/// Verifies the checker rejects a corrupted analytic gradient.
bool negative_control(const CheckOptions& options = {});

}  // namespace gradcheck
}  // namespace talkmesh
