#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/data.hpp"
#include "talkmesh/decoder.hpp"
#include "talkmesh/encoders.hpp"
#include "talkmesh/graph.hpp"
#include "talkmesh/losses.hpp"
#include "talkmesh/mesh.hpp"

namespace talkmesh {

/// One switch per loss term plus the structural ablations.
struct AblationFlags {
  bool adversarial = true;
  bool style_similarity = true;
  bool orthogonality = true;
  bool mutual_info = true;
  bool contrastive = true;
  bool graph_encoder = true;
  bool audio_disentanglement = true;
  bool motion_disentanglement = true;
};

/// Two-layer style classifier head used behind the gradient reversal.
class StyleClassifier : public torch::nn::Module {
 public:
  StyleClassifier(std::int64_t in_dim, std::int64_t hidden, std::int64_t num_classes,
                  torch::Dtype dtype);
  torch::Tensor forward(const torch::Tensor& x) const;

 private:
  std::shared_ptr<Linear> in_, out_;
};

/// Uniform-length training batch.
struct Batch {
  std::vector<AudioClip> clips;
  torch::Tensor motion;     // B x T x N_v x 3
  torch::Tensor templates;  // B x N_v x 3
  torch::Tensor labels;     // B, int64
};

struct ForwardOutputs {
  torch::Tensor predictions;  // B x T x N_v x 3
  losses::MotionLossTerms motion_terms;
  torch::Tensor adversarial, style_similarity, orthogonality, mutual_info, contrastive;
  torch::Tensor total;
  torch::Tensor audio_content, motion_content;        // B x T x D
  torch::Tensor style_audio, style_motion, style_identity, style_fused;  // B x D_s
};

/// The full speech-to-motion model: spatial graph encoder, the five
/// style/content encoders, the autoregressive decoder and the two
/// adversarial classifier heads.
class Model : public torch::nn::Module {
 public:
  Model(const ModelConfig& config, const MeshTopology& topology);

  const ModelConfig& config() const { return config_; }
  const MeshTopology& topology() const { return topology_; }

  /// Teacher-forced pass producing every loss term. alpha_c is the current
  /// gradient-reversal strength.
  ForwardOutputs training_forward(const Batch& batch, const losses::LossWeights& weights,
                                  double alpha_c, const AblationFlags& flags) const;

  /// Autoregressive inference. The first pass decodes with a zero motion
  /// style and template-derived content; the motion branch is then refreshed
  /// from generated frames, either every refresh_every steps (> 0) or once
  /// after a full pass (0, the default two-pass scheme). A style reference
  /// sequence pins the motion style instead.
  MotionSequence generate(const AudioClip& clip, const IdentityLabel& identity,
                          const torch::Tensor& template_verts,
                          std::optional<std::int64_t> frames = std::nullopt,
                          const std::optional<MotionSequence>& style_reference = std::nullopt,
                          std::int64_t refresh_every = 0, double fps = 25.0) const;

  /// Pooled content features and style codes for probes and evaluation.
  struct EncodedFeatures {
    torch::Tensor audio_content_pooled;   // D_a
    torch::Tensor motion_content_pooled;  // D_m
    torch::Tensor style_fused;            // D_s
  };
  EncodedFeatures encode_features(const data::TrainingExample& example) const;

  std::shared_ptr<GraphEncoder> graph_encoder;
  std::shared_ptr<AudioContentEncoder> audio_content_encoder;
  std::shared_ptr<AudioStyleEncoder> audio_style_encoder;
  std::shared_ptr<MotionStyleEncoder> motion_style_encoder;
  std::shared_ptr<MotionContentEncoder> motion_content_encoder;
  std::shared_ptr<IdentityEncoder> identity_encoder;
  std::shared_ptr<MotionDecoder> decoder;
  std::shared_ptr<StyleClassifier> audio_classifier;
  std::shared_ptr<StyleClassifier> motion_classifier;

  /// Parameter names belonging to the style encoders (frozen in stage 1).
  std::vector<std::string> style_parameter_names() const;

 private:
  torch::Tensor encode_graph(const torch::Tensor& motion, bool use_graph) const;

  ModelConfig config_;
  MeshTopology topology_;
};

}  // namespace talkmesh
