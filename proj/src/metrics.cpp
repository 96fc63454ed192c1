#include "talkmesh/metrics.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace talkmesh {
namespace metrics {

namespace {

torch::Tensor select_vertices(const torch::Tensor& frames,
                              const std::vector<std::int64_t>& indices) {
  return frames.index_select(1, torch::tensor(indices, torch::kInt64));
}

}  // namespace

double lip_vertex_error(const torch::Tensor& pred, const torch::Tensor& gt,
                        const std::vector<std::int64_t>& lip_indices) {
  if (!pred.sizes().equals(gt.sizes())) throw InputError("lve: shape mismatch");
  if (lip_indices.empty()) throw InputError("lve: empty lip mask");
  auto p = select_vertices(pred.to(torch::kFloat64), lip_indices);
  auto g = select_vertices(gt.to(torch::kFloat64), lip_indices);
  auto err = (p - g).pow(2).sum(-1).sqrt();  // T x |lips|
  return std::get<0>(err.max(1)).mean().item<double>();
}

double upper_face_dynamics_deviation(const torch::Tensor& pred, const torch::Tensor& gt,
                                     const std::vector<std::int64_t>& upper_face_indices,
                                     const torch::Tensor& template_verts) {
  if (!pred.sizes().equals(gt.sizes())) throw InputError("fdd: shape mismatch");
  if (upper_face_indices.empty()) throw InputError("fdd: empty upper-face mask");
  auto tmpl = select_vertices(template_verts.to(torch::kFloat64).unsqueeze(0),
                              upper_face_indices);
  auto motion_std = [&](const torch::Tensor& frames) {
    auto disp = (select_vertices(frames.to(torch::kFloat64), upper_face_indices) - tmpl)
                    .pow(2)
                    .sum(-1)
                    .sqrt();      // T x |upper|
    return disp.std(0, false);    // population std per vertex
  };
  return (motion_std(pred) - motion_std(gt)).abs().mean().item<double>();
}

double style_silhouette(const torch::Tensor& style_codes,
                        const std::vector<std::int64_t>& labels) {
  const auto n = style_codes.size(0);
  if (n != static_cast<std::int64_t>(labels.size())) {
    throw InputError("silhouette: label count mismatch");
  }
  std::set<std::int64_t> distinct(labels.begin(), labels.end());
  if (n < 2 || distinct.size() < 2) return 0.0;

  auto x = style_codes.to(torch::kFloat64);
  auto norms = x.norm(2, 1, true) + 1e-12;
  auto cosine = torch::matmul(x / norms, (x / norms).t()).clamp(-1.0, 1.0);
  auto dist_matrix = (1.0 - cosine).contiguous();
  auto dist = dist_matrix.accessor<double, 2>();

  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double own_sum = 0.0;
    std::int64_t own_count = 0;
    std::vector<double> other_sum;
    std::vector<std::int64_t> other_count;
    std::vector<std::int64_t> other_label;
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        own_sum += dist[i][j];
        ++own_count;
      } else {
        auto lbl = labels[static_cast<std::size_t>(j)];
        std::size_t slot = 0;
        for (; slot < other_label.size(); ++slot) {
          if (other_label[slot] == lbl) break;
        }
        if (slot == other_label.size()) {
          other_label.push_back(lbl);
          other_sum.push_back(0.0);
          other_count.push_back(0);
        }
        other_sum[slot] += dist[i][j];
        other_count[slot] += 1;
      }
    }
    if (own_count == 0) continue;  // singleton cluster scores 0
    double a = own_sum / static_cast<double>(own_count);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < other_sum.size(); ++s) {
      b = std::min(b, other_sum[s] / static_cast<double>(other_count[s]));
    }
    double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

double linear_probe_accuracy(const torch::Tensor& train_features,
                             const std::vector<std::int64_t>& train_labels,
                             const torch::Tensor& test_features,
                             const std::vector<std::int64_t>& test_labels,
                             std::int64_t num_classes, std::int64_t steps,
                             double learning_rate) {
  if (train_features.size(0) != static_cast<std::int64_t>(train_labels.size()) ||
      test_features.size(0) != static_cast<std::int64_t>(test_labels.size())) {
    throw InputError("probe: feature/label count mismatch");
  }
  auto x = train_features.to(torch::kFloat64);
  // Standardize with train statistics so the probe is scale-insensitive.
  auto mean = x.mean(0);
  auto std = (x - mean).pow(2).mean(0).sqrt() + 1e-8;
  x = (x - mean) / std;
  auto y = torch::tensor(train_labels, torch::kInt64);

  auto w = torch::zeros({x.size(1), num_classes},
                        torch::TensorOptions().dtype(torch::kFloat64).requires_grad(true));
  auto b = torch::zeros({num_classes},
                        torch::TensorOptions().dtype(torch::kFloat64).requires_grad(true));
  for (std::int64_t s = 0; s < steps; ++s) {
    auto logits = torch::matmul(x, w) + b;
    auto loss = -torch::log_softmax(logits, 1).gather(1, y.unsqueeze(1)).mean() +
                1e-4 * w.pow(2).sum();
    auto grads = torch::autograd::grad({loss}, {w, b});
    torch::NoGradGuard no_grad;
    w -= learning_rate * grads[0];
    b -= learning_rate * grads[1];
  }
  torch::NoGradGuard no_grad;
  auto xt = (test_features.to(torch::kFloat64) - mean) / std;
  auto pred = (torch::matmul(xt, w) + b).argmax(1);
  auto truth = torch::tensor(test_labels, torch::kInt64);
  return pred.eq(truth).to(torch::kFloat64).mean().item<double>();
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "sequence                         lve_mm      fdd_mm\n";
  char line[128];
  for (const auto& row : per_sequence) {
    std::snprintf(line, sizeof(line), "%-28s %11.6f %11.6f\n", row.name.c_str(), row.lve,
                  row.fdd);
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-28s %11.6f %11.6f\n", "MEAN", lve, fdd);
  os << line;
  std::snprintf(line, sizeof(line), "style_silhouette %.6f\n", style_silhouette);
  os << line;
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["lve_mm"] = lve;
  j["fdd_mm"] = fdd;
  j["style_silhouette"] = style_silhouette;
  auto rows = nlohmann::json::array();
  for (const auto& row : per_sequence) {
    rows.push_back({{"name", row.name}, {"lve_mm", row.lve}, {"fdd_mm", row.fdd}});
  }
  j["per_sequence"] = rows;
  return j.dump(2);
}

}  // namespace metrics
}  // namespace talkmesh
