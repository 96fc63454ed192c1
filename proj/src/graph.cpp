#include "talkmesh/graph.hpp"

#include <cmath>

namespace talkmesh {

namespace {
constexpr double kLeakySlope = 0.2;
}

GatLayer::GatLayer(std::int64_t in_dim, std::int64_t out_dim, torch::Dtype dtype)
    : in_dim_(in_dim), out_dim_(out_dim) {
  double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  weight = register_parameter(
      "weight", torch::empty({in_dim, out_dim}, opts(dtype)).uniform_(-bound, bound));
  double abound = std::sqrt(6.0 / static_cast<double>(out_dim + 1));
  attn_src = register_parameter("attn_src",
                                torch::empty({out_dim}, opts(dtype)).uniform_(-abound, abound));
  attn_dst = register_parameter("attn_dst",
                                torch::empty({out_dim}, opts(dtype)).uniform_(-abound, abound));
}

std::pair<torch::Tensor, torch::Tensor> attention_index_tensors(const MeshTopology& topology,
                                                                bool include_edges) {
  std::vector<std::int64_t> src;
  std::vector<std::int64_t> dst;
  std::int64_t n = topology.vertex_count;
  src.reserve(topology.edges.size() * 2 + static_cast<std::size_t>(n));
  dst.reserve(src.capacity());
  if (include_edges) {
    for (const auto& [a, b] : topology.edges) {
      src.push_back(a);
      dst.push_back(b);
      src.push_back(b);
      dst.push_back(a);
    }
  }
  for (std::int64_t v = 0; v < n; ++v) {  // implicit self-loops
    src.push_back(v);
    dst.push_back(v);
  }
  auto o = torch::TensorOptions().dtype(torch::kInt64);
  return {torch::tensor(src, o), torch::tensor(dst, o)};
}

torch::Tensor GatLayer::forward(const torch::Tensor& node_states,
                                const MeshTopology& topology) const {
  return forward_with_attention(node_states, topology).first;
}

std::pair<torch::Tensor, torch::Tensor> GatLayer::forward_with_attention(
    const torch::Tensor& node_states, const MeshTopology& topology) const {
  if (node_states.size(-1) != in_dim_) {
    throw ConfigError("gat layer: expected feature dim " + std::to_string(in_dim_) + ", got " +
                      std::to_string(node_states.size(-1)));
  }
  if (node_states.size(-2) != topology.vertex_count) {
    throw ConfigError("gat layer: node count does not match topology");
  }
  require_finite(node_states, "gat layer input");

  auto states = node_states.dim() == 2 ? node_states.unsqueeze(0) : node_states.reshape(
      {-1, topology.vertex_count, in_dim_});
  const auto batch = states.size(0);
  auto [src, dst] = attention_index_tensors(topology);
  const auto n_edges = src.size(0);

  auto z = torch::matmul(states, weight);             // B x N x D_out
  auto score_src = torch::matmul(z, attn_src);        // B x N
  auto score_dst = torch::matmul(z, attn_dst);        // B x N

  auto logits = torch::leaky_relu(
      score_src.index_select(1, src) + score_dst.index_select(1, dst), kLeakySlope);  // B x E

  // Segment softmax over incoming edges per target vertex. The max shift is
  // detached; softmax is invariant to it.
  auto neg_inf = -std::numeric_limits<double>::infinity();
  auto dst2d = dst.unsqueeze(0).expand({batch, n_edges});
  auto seg_max = torch::full({batch, topology.vertex_count}, neg_inf, logits.options())
                     .scatter_reduce_(1, dst2d, logits.detach(), "amax", /*include_self=*/true);
  auto shifted = torch::exp(logits - seg_max.gather(1, dst2d));
  auto denom = torch::zeros({batch, topology.vertex_count}, logits.options())
                   .index_add_(1, dst, shifted);
  auto alpha = shifted / denom.gather(1, dst2d);  // B x E, sums to 1 per target

  auto messages = z.index_select(1, src) * alpha.unsqueeze(-1);  // B x E x D_out
  auto aggregated = torch::zeros({batch, topology.vertex_count, out_dim_}, z.options())
                        .index_add_(1, dst, messages);
  auto out = torch::leaky_relu(aggregated, kLeakySlope);

  if (node_states.dim() == 2) return {out.squeeze(0), alpha.squeeze(0)};
  auto shape = node_states.sizes().vec();
  shape.back() = out_dim_;
  return {out.reshape(shape), alpha};
}

GraphEncoder::GraphEncoder(std::int64_t feature_dim, std::int64_t num_layers, torch::Dtype dtype,
                           bool spatial_aggregation)
    : feature_dim_(feature_dim), spatial_aggregation_(spatial_aggregation) {
  if (num_layers < 1) throw ConfigError("graph encoder needs at least one layer");
  std::int64_t in_dim = 3;
  for (std::int64_t l = 0; l < num_layers; ++l) {
    auto layer = std::make_shared<GatLayer>(in_dim, feature_dim, dtype);
    register_module("layer" + std::to_string(l), layer);
    layers_.push_back(layer);
    in_dim = feature_dim;
  }
}

torch::Tensor GraphEncoder::forward(const torch::Tensor& frames,
                                    const MeshTopology& topology) const {
  if (frames.size(-2) != topology.vertex_count) {
    throw ConfigError("graph encoder: vertex count mismatch with topology");
  }
  MeshTopology effective = topology;
  if (!spatial_aggregation_) effective.edges.clear();
  auto h = frames;
  for (const auto& layer : layers_) h = layer->forward(h, effective);
  return h;
}

}  // namespace talkmesh
