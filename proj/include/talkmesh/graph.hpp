#pragma once

#include <torch/torch.h>

#include "talkmesh/mesh.hpp"

namespace talkmesh {

/// Single-head graph attention layer. For every vertex v the output is
///   sigma( sum_{u in N(v) + {v}} alpha_vu * W h_u )
/// where the attention logits come from a learned vector applied to the
/// transformed endpoint features and alpha is a softmax over the
/// neighborhood. sigma is a leaky rectifier (slope 0.2). Edges are iterated
/// sparsely; no dense vertex x vertex matrix is formed.
class GatLayer : public torch::nn::Module {
 public:
  GatLayer(std::int64_t in_dim, std::int64_t out_dim, torch::Dtype dtype);

  /// node_states: ... x N_v x in_dim (leading batch/frame dims allowed).
  torch::Tensor forward(const torch::Tensor& node_states, const MeshTopology& topology) const;

  /// Forward pass that also returns the per-edge attention weights
  /// (B x E, aligned with attention_index_tensors).
  std::pair<torch::Tensor, torch::Tensor> forward_with_attention(
      const torch::Tensor& node_states, const MeshTopology& topology) const;

  torch::Tensor weight;    // in_dim x out_dim
  torch::Tensor attn_src;  // out_dim
  torch::Tensor attn_dst;  // out_dim

 private:
  std::int64_t in_dim_;
  std::int64_t out_dim_;
};

/// Stacked GAT layers applied independently per frame: the spatial encoder
/// mapping a motion sequence (T x N_v x 3) to graph features (T x N_v x D_g).
class GraphEncoder : public torch::nn::Module {
 public:
  GraphEncoder(std::int64_t feature_dim, std::int64_t num_layers, torch::Dtype dtype,
               bool spatial_aggregation = true);

  torch::Tensor forward(const torch::Tensor& frames, const MeshTopology& topology) const;

  std::int64_t feature_dim() const { return feature_dim_; }

 private:
  std::vector<std::shared_ptr<GatLayer>> layers_;
  std::int64_t feature_dim_;
  bool spatial_aggregation_;  // false: self-loop-only attention (ablation)
};

/// Directed edge list with self-loops for the softmax segments: returns
/// (source, target) index tensors of length 2*|E| + N_v.
std::pair<torch::Tensor, torch::Tensor> attention_index_tensors(const MeshTopology& topology,
                                                                bool include_edges = true);

}  // namespace talkmesh
