#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "talkmesh/audio.hpp"

namespace talkmesh {

/// Architecture hyperparameters shared by the encoders, decoder and model
/// assembly. Vertex count comes from the topology the model is built for.
struct ModelConfig {
  std::int64_t vertex_count = 0;
  std::int64_t num_identities = 0;

  std::int64_t style_dim = 64;     // D_s, shared by all three style branches
  std::int64_t audio_dim = 64;     // D_a
  std::int64_t motion_dim = 64;    // D_m
  std::int64_t graph_dim = 64;     // D_g
  std::int64_t graph_layers = 2;
  std::int64_t frontend_dim = 64;  // D_f

  std::int64_t heads = 4;
  std::int64_t encoder_layers = 2;
  std::int64_t decoder_layers = 2;
  std::int64_t ff_multiplier = 4;

  std::int64_t decoder_dim = 64;       // D_d
  std::int64_t period = 25;            // periodic positional encoding / mask period
  double alignment_slope = 0.1;        // cross-attention alignment bias slope
  std::int64_t classifier_hidden = 64;

  MelOptions mel;
  torch::Dtype dtype = torch::kFloat32;

  void validate() const;
};

}  // namespace talkmesh
