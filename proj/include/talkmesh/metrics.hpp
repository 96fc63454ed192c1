#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/common.hpp"

namespace talkmesh {
namespace metrics {

/// Per-frame maximum Euclidean error over lip vertices, averaged over
/// frames; pred/gt: T x N_v x 3, millimeters.
double lip_vertex_error(const torch::Tensor& pred, const torch::Tensor& gt,
                        const std::vector<std::int64_t>& lip_indices);

/// For each upper-face vertex, the standard deviation over time of its
/// displacement norm from the template; returns the mean absolute
/// difference of those deviations between prediction and ground truth.
double upper_face_dynamics_deviation(const torch::Tensor& pred, const torch::Tensor& gt,
                                     const std::vector<std::int64_t>& upper_face_indices,
                                     const torch::Tensor& template_verts);

/// Silhouette coefficient over cosine distance; degenerate configurations
/// (single cluster, identical points) score 0 by convention.
double style_silhouette(const torch::Tensor& style_codes, const std::vector<std::int64_t>& labels);

/// Accuracy of a multinomial logistic probe fit on the training features
/// (full-batch gradient descent from zeros, hence deterministic) and scored
/// on the held-out features.
double linear_probe_accuracy(const torch::Tensor& train_features,
                             const std::vector<std::int64_t>& train_labels,
                             const torch::Tensor& test_features,
                             const std::vector<std::int64_t>& test_labels,
                             std::int64_t num_classes, std::int64_t steps = 500,
                             double learning_rate = 0.5);

struct SequenceEval {
  std::string name;
  double lve = 0.0;
  double fdd = 0.0;
};

struct EvalReport {
  double lve = 0.0;
  double fdd = 0.0;
  double style_silhouette = 0.0;
  std::vector<SequenceEval> per_sequence;

  std::string to_table() const;
  std::string to_json() const;
};

}  // namespace metrics
}  // namespace talkmesh
