#pragma once

#include <memory>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/audio.hpp"
#include "talkmesh/model_config.hpp"
#include "talkmesh/nn.hpp"

namespace talkmesh {

enum class StyleSource { kAudio, kMotion, kIdentity, kFused };

struct StyleCode {
  torch::Tensor vector;  // B x D_s
  StyleSource source = StyleSource::kFused;
};

/// Style encoders return the pooled code plus the pre-pooling token
/// sequence; the orthogonality constraint consumes the tokens.
struct StyleEncoding {
  torch::Tensor tokens;  // B x F_s x D_s
  StyleCode code;
};

/// One-hot speaker identity. index and one_hot stay consistent.
struct IdentityLabel {
  std::int64_t index = 0;
  std::int64_t num_identities = 0;

  torch::Tensor one_hot(torch::Dtype dtype) const;
  static IdentityLabel from_one_hot(const torch::Tensor& one_hot);
};

/// Audio content encoder: frontend features resampled to the motion frame
/// count, sinusoidal positions, transformer encoder.
class AudioContentEncoder : public torch::nn::Module {
 public:
  explicit AudioContentEncoder(const ModelConfig& cfg);

  /// Returns T x D_a for one clip.
  torch::Tensor forward(const AudioClip& clip, std::int64_t target_frames) const;
  /// Returns B x T x D_a.
  torch::Tensor forward_batch(const std::vector<AudioClip>& clips,
                              std::int64_t target_frames) const;

  std::shared_ptr<AudioFrontend> frontend;

 private:
  std::shared_ptr<Linear> proj_;
  std::shared_ptr<TransformerEncoder> encoder_;
  torch::Dtype dtype_;
};

/// Audio style encoder: two frontend branches (speaker and affect), per-frame
/// concatenation projected to the style dimension, temporal mean pooling.
/// The pooled code does not depend on the clip length.
class AudioStyleEncoder : public torch::nn::Module {
 public:
  explicit AudioStyleEncoder(const ModelConfig& cfg);

  StyleEncoding forward(const AudioClip& clip) const;
  StyleEncoding forward_batch(const std::vector<AudioClip>& clips) const;

  std::shared_ptr<AudioFrontend> speaker_branch, affect_branch;

 private:
  std::shared_ptr<Linear> proj_;
};

/// Motion style encoder over graph features: per-frame linear down
/// projection, two unpadded temporal convolutions forming style tokens, a
/// transformer encoder (no positions, so constant sequences stay constant),
/// temporal mean pooling.
class MotionStyleEncoder : public torch::nn::Module {
 public:
  explicit MotionStyleEncoder(const ModelConfig& cfg);

  /// graph_features: B x T x N_v x D_g with T >= min_frames().
  StyleEncoding forward(const torch::Tensor& graph_features) const;

  std::int64_t min_frames() const;

 private:
  std::shared_ptr<Linear> down_;
  std::vector<std::shared_ptr<Conv1d>> convs_;
  std::shared_ptr<TransformerEncoder> encoder_;
  std::int64_t style_dim_;
};

/// Motion content encoder: per-frame linear down projection, two
/// instance-normalized temporal convolutions (length preserving), sinusoidal
/// positions, transformer encoder, linear head. Output keeps T frames.
class MotionContentEncoder : public torch::nn::Module {
 public:
  explicit MotionContentEncoder(const ModelConfig& cfg);

  /// graph_features: B x T x N_v x D_g -> B x T x D_m.
  torch::Tensor forward(const torch::Tensor& graph_features) const;

  /// Output of each instance-normalization layer for the given input,
  /// before the activation (B x C x T each).
  std::vector<torch::Tensor> instance_norm_outputs(const torch::Tensor& graph_features) const;

 private:
  torch::Tensor conv_block(const torch::Tensor& g,
                           std::vector<torch::Tensor>* norm_taps) const;

  std::shared_ptr<Linear> down_, head_;
  std::vector<std::shared_ptr<Conv1d>> convs_;
  std::shared_ptr<TransformerEncoder> encoder_;
  torch::Dtype dtype_;
};

/// Identity style encoder: a personalized embedding (linear map of the
/// one-hot), a common embedding table indexed by identity, single-head
/// attention over the pair with the personalized style as query, and a
/// residual combination.
class IdentityEncoder : public torch::nn::Module {
 public:
  explicit IdentityEncoder(const ModelConfig& cfg);

  StyleCode forward(const std::vector<IdentityLabel>& labels) const;

  torch::Tensor personal_map;  // K x D_s (row per identity)
  torch::Tensor common_table;  // K x D_s
  std::shared_ptr<Linear> attn_q, attn_k, attn_v, attn_out;

 private:
  std::int64_t num_identities_;
  std::int64_t style_dim_;
};

/// Elementwise sum of the three style codes; all must share the dimension.
StyleCode fuse_styles(const StyleCode& audio, const StyleCode& motion, const StyleCode& identity);

}  // namespace talkmesh
