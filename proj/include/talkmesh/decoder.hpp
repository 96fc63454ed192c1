#pragma once

#include <memory>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/model_config.hpp"
#include "talkmesh/nn.hpp"

namespace talkmesh {

/// Sinusoidal encoding of (t mod period).
torch::Tensor periodic_positional_encoding(std::int64_t t, std::int64_t period, std::int64_t dim,
                                           torch::Dtype dtype = torch::kFloat64);

/// Additive self-attention bias: -inf above the diagonal, otherwise a
/// non-positive penalty of -floor((i - j) / period).
torch::Tensor biased_causal_mask(std::int64_t t_query, std::int64_t t_key, std::int64_t period,
                                 torch::Dtype dtype = torch::kFloat64);

/// Additive cross-attention bias favoring the proportionally aligned key
/// index floor(i * t_key / t_query): zero there, decreasing linearly with
/// distance at the given slope.
torch::Tensor alignment_bias(std::int64_t t_query, std::int64_t t_key, double slope,
                             torch::Dtype dtype = torch::kFloat64);

/// Rollout bookkeeping for autoregressive decoding.
struct DecoderState {
  std::vector<torch::Tensor> generated;  // each B x N_v x 3
  std::int64_t step = 0;
};

/// Autoregressive motion decoder. Tokens embed previously generated frames
/// as displacements from the neutral template, with the style code added to
/// every token and periodic positions; causal self-attention uses the biased
/// mask; cross-attention runs over audio and motion content concatenated
/// along time with source-type embeddings and the alignment bias. The output
/// head predicts per-vertex displacements added to the template and is
/// zero-initialized, so an untrained decoder reproduces the template.
class MotionDecoder : public torch::nn::Module {
 public:
  explicit MotionDecoder(const ModelConfig& cfg);

  /// Parallel teacher-forced pass. history: B x T x N_v x 3, where row t is
  /// the decoder input token for output frame t (row 0 is the template).
  /// audio: B x T_a x D_a, content: B x T_c x D_m, style: B x D_s,
  /// template_verts: B x N_v x 3. Returns B x T x N_v x 3.
  torch::Tensor forward(const torch::Tensor& history, const torch::Tensor& audio,
                        const torch::Tensor& content, const torch::Tensor& style,
                        const torch::Tensor& template_verts) const;

  /// Predicts the next frame from the generated prefix and appends it.
  torch::Tensor decode_step(DecoderState& state, const torch::Tensor& audio,
                            const torch::Tensor& content, const torch::Tensor& style,
                            const torch::Tensor& template_verts) const;

  /// Teacher-forced sequence pass: ground truth frames shifted one step form
  /// the history.
  torch::Tensor decode_teacher_forced(const torch::Tensor& ground_truth,
                                      const torch::Tensor& audio, const torch::Tensor& content,
                                      const torch::Tensor& style,
                                      const torch::Tensor& template_verts) const;

  /// Inference rollout for a fixed (audio, content, style).
  torch::Tensor decode_sequence(std::int64_t frames, const torch::Tensor& audio,
                                const torch::Tensor& content, const torch::Tensor& style,
                                const torch::Tensor& template_verts) const;

 private:
  std::shared_ptr<Linear> in_proj_, style_proj_, audio_proj_, content_proj_, out_proj_;
  torch::Tensor source_embed_;  // 2 x D_d
  struct Layer {
    std::shared_ptr<MultiheadAttention> self_attn, cross_attn;
    std::shared_ptr<FeedForward> ff;
    std::shared_ptr<LayerNorm> norm1, norm2, norm3;
  };
  std::vector<Layer> layers_;
  std::int64_t vertex_count_;
  std::int64_t period_;
  double alignment_slope_;
  torch::Dtype dtype_;
};

}  // namespace talkmesh
