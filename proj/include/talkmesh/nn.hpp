#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/common.hpp"

namespace talkmesh {

class Linear : public torch::nn::Module {
 public:
  Linear(std::int64_t in, std::int64_t out, torch::Dtype dtype, bool with_bias = true);
  torch::Tensor forward(const torch::Tensor& x) const;

  torch::Tensor weight;  // in x out
  torch::Tensor bias;    // out (undefined when bias disabled)
};

class LayerNorm : public torch::nn::Module {
 public:
  LayerNorm(std::int64_t dim, torch::Dtype dtype);
  torch::Tensor forward(const torch::Tensor& x) const;

  torch::Tensor gamma, beta;

 private:
  std::int64_t dim_;
};

/// Multi-head attention with an optional additive logit bias (query x key),
/// shared across heads.
class MultiheadAttention : public torch::nn::Module {
 public:
  MultiheadAttention(std::int64_t model_dim, std::int64_t num_heads, torch::Dtype dtype);

  /// query: B x T_q x D, key/value: B x T_k x D, bias: T_q x T_k or undefined.
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key,
                        const torch::Tensor& value, const torch::Tensor& bias = {}) const;

 private:
  std::shared_ptr<Linear> q_, k_, v_, out_;
  std::int64_t heads_;
  std::int64_t head_dim_;
};

class FeedForward : public torch::nn::Module {
 public:
  FeedForward(std::int64_t model_dim, std::int64_t hidden_dim, torch::Dtype dtype);
  torch::Tensor forward(const torch::Tensor& x) const;

 private:
  std::shared_ptr<Linear> in_, out_;
};

class TransformerEncoderLayer : public torch::nn::Module {
 public:
  TransformerEncoderLayer(std::int64_t model_dim, std::int64_t num_heads,
                          std::int64_t hidden_dim, torch::Dtype dtype);
  torch::Tensor forward(const torch::Tensor& x) const;

 private:
  std::shared_ptr<MultiheadAttention> attn_;
  std::shared_ptr<FeedForward> ff_;
  std::shared_ptr<LayerNorm> norm1_, norm2_;
};

class TransformerEncoder : public torch::nn::Module {
 public:
  TransformerEncoder(std::int64_t model_dim, std::int64_t num_heads, std::int64_t num_layers,
                     std::int64_t hidden_dim, torch::Dtype dtype);
  torch::Tensor forward(const torch::Tensor& x) const;

 private:
  std::vector<std::shared_ptr<TransformerEncoderLayer>> layers_;
};

/// Standard sinusoidal positional encoding rows for positions [0, length).
torch::Tensor sinusoidal_encoding(std::int64_t length, std::int64_t dim, torch::Dtype dtype);

/// Per-channel normalization over the time axis (input B x C x T), biased
/// variance, no affine transform.
torch::Tensor instance_norm_time(const torch::Tensor& x, double eps = 1e-8);

/// Temporal convolution, weights out_c x in_c x k. Input B x C x T.
class Conv1d : public torch::nn::Module {
 public:
  enum class Padding { kValid, kReplicate };
  Conv1d(std::int64_t in_c, std::int64_t out_c, std::int64_t kernel, Padding padding,
         torch::Dtype dtype);
  torch::Tensor forward(const torch::Tensor& x) const;

  std::int64_t kernel() const { return kernel_; }

  torch::Tensor weight, bias;

 private:
  std::int64_t kernel_;
  Padding padding_;
};

}  // namespace talkmesh
