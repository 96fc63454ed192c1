#include "talkmesh/nn.hpp"

#include <cmath>

namespace talkmesh {

Linear::Linear(std::int64_t in, std::int64_t out, torch::Dtype dtype, bool with_bias) {
  double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  weight = register_parameter("weight",
                              torch::empty({in, out}, opts(dtype)).uniform_(-bound, bound));
  if (with_bias) {
    bias = register_parameter("bias", torch::zeros({out}, opts(dtype)));
  }
}

torch::Tensor Linear::forward(const torch::Tensor& x) const {
  auto y = torch::matmul(x, weight);
  return bias.defined() ? y + bias : y;
}

LayerNorm::LayerNorm(std::int64_t dim, torch::Dtype dtype) : dim_(dim) {
  gamma = register_parameter("gamma", torch::ones({dim}, opts(dtype)));
  beta = register_parameter("beta", torch::zeros({dim}, opts(dtype)));
}

torch::Tensor LayerNorm::forward(const torch::Tensor& x) const {
  auto mean = x.mean(-1, true);
  auto var = (x - mean).pow(2).mean(-1, true);
  return (x - mean) / torch::sqrt(var + 1e-5) * gamma + beta;
}

MultiheadAttention::MultiheadAttention(std::int64_t model_dim, std::int64_t num_heads,
                                       torch::Dtype dtype)
    : heads_(num_heads), head_dim_(model_dim / num_heads) {
  if (model_dim % num_heads != 0) {
    throw ConfigError("attention model dim must be divisible by head count");
  }
  q_ = register_module("q", std::make_shared<Linear>(model_dim, model_dim, dtype));
  k_ = register_module("k", std::make_shared<Linear>(model_dim, model_dim, dtype));
  v_ = register_module("v", std::make_shared<Linear>(model_dim, model_dim, dtype));
  out_ = register_module("out", std::make_shared<Linear>(model_dim, model_dim, dtype));
}

torch::Tensor MultiheadAttention::forward(const torch::Tensor& query, const torch::Tensor& key,
                                          const torch::Tensor& value,
                                          const torch::Tensor& bias) const {
  const auto b = query.size(0);
  const auto tq = query.size(1);
  const auto tk = key.size(1);
  auto split = [&](const torch::Tensor& x, std::int64_t t) {
    return x.reshape({b, t, heads_, head_dim_}).permute({0, 2, 1, 3});
  };
  auto q = split(q_->forward(query), tq);
  auto k = split(k_->forward(key), tk);
  auto v = split(v_->forward(value), tk);
  auto logits = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim_));
  if (bias.defined()) logits = logits + bias;  // broadcast over batch and heads
  auto attn = torch::softmax(logits, -1);
  auto ctx = torch::matmul(attn, v).permute({0, 2, 1, 3}).reshape({b, tq, heads_ * head_dim_});
  return out_->forward(ctx);
}

FeedForward::FeedForward(std::int64_t model_dim, std::int64_t hidden_dim, torch::Dtype dtype) {
  in_ = register_module("in", std::make_shared<Linear>(model_dim, hidden_dim, dtype));
  out_ = register_module("out", std::make_shared<Linear>(hidden_dim, model_dim, dtype));
}

torch::Tensor FeedForward::forward(const torch::Tensor& x) const {
  return out_->forward(torch::gelu(in_->forward(x)));
}

TransformerEncoderLayer::TransformerEncoderLayer(std::int64_t model_dim, std::int64_t num_heads,
                                                 std::int64_t hidden_dim, torch::Dtype dtype) {
  attn_ = register_module("attn",
                          std::make_shared<MultiheadAttention>(model_dim, num_heads, dtype));
  ff_ = register_module("ff", std::make_shared<FeedForward>(model_dim, hidden_dim, dtype));
  norm1_ = register_module("norm1", std::make_shared<LayerNorm>(model_dim, dtype));
  norm2_ = register_module("norm2", std::make_shared<LayerNorm>(model_dim, dtype));
}

torch::Tensor TransformerEncoderLayer::forward(const torch::Tensor& x) const {
  auto h = norm1_->forward(x + attn_->forward(x, x, x));
  return norm2_->forward(h + ff_->forward(h));
}

TransformerEncoder::TransformerEncoder(std::int64_t model_dim, std::int64_t num_heads,
                                       std::int64_t num_layers, std::int64_t hidden_dim,
                                       torch::Dtype dtype) {
  for (std::int64_t l = 0; l < num_layers; ++l) {
    auto layer = std::make_shared<TransformerEncoderLayer>(model_dim, num_heads, hidden_dim, dtype);
    register_module("layer" + std::to_string(l), layer);
    layers_.push_back(layer);
  }
}

torch::Tensor TransformerEncoder::forward(const torch::Tensor& x) const {
  auto h = x;
  for (const auto& layer : layers_) h = layer->forward(h);
  return h;
}

torch::Tensor sinusoidal_encoding(std::int64_t length, std::int64_t dim, torch::Dtype dtype) {
  auto pos = torch::arange(length, opts(dtype)).unsqueeze(1);
  auto i = torch::arange(dim / 2, opts(dtype));
  auto freq = torch::exp(i * (-std::log(10000.0) * 2.0 / static_cast<double>(dim)));
  auto angles = pos * freq;  // length x dim/2
  auto enc = torch::zeros({length, dim}, opts(dtype));
  enc.index_put_({torch::indexing::Slice(), torch::indexing::Slice(0, torch::indexing::None, 2)},
                 torch::sin(angles));
  enc.index_put_({torch::indexing::Slice(), torch::indexing::Slice(1, torch::indexing::None, 2)},
                 torch::cos(angles));
  return enc;
}

torch::Tensor instance_norm_time(const torch::Tensor& x, double eps) {
  auto mean = x.mean(-1, true);
  auto var = (x - mean).pow(2).mean(-1, true);
  return (x - mean) / torch::sqrt(var + eps);
}

Conv1d::Conv1d(std::int64_t in_c, std::int64_t out_c, std::int64_t kernel, Padding padding,
               torch::Dtype dtype)
    : kernel_(kernel), padding_(padding) {
  double bound = std::sqrt(1.0 / static_cast<double>(in_c * kernel));
  weight = register_parameter(
      "weight", torch::empty({out_c, in_c, kernel}, opts(dtype)).uniform_(-bound, bound));
  bias = register_parameter("bias", torch::zeros({out_c}, opts(dtype)));
}

torch::Tensor Conv1d::forward(const torch::Tensor& x) const {
  auto in = x;
  if (padding_ == Padding::kReplicate) {
    auto pad = (kernel_ - 1) / 2;
    in = torch::replication_pad1d(in, {pad, kernel_ - 1 - pad});
  }
  return torch::conv1d(in, weight, bias);
}

}  // namespace talkmesh
