#include "talkmesh/decoder.hpp"

#include <cmath>
#include <limits>

namespace talkmesh {

torch::Tensor periodic_positional_encoding(std::int64_t t, std::int64_t period, std::int64_t dim,
                                           torch::Dtype dtype) {
  if (t < 0) throw InputError("positional encoding step must be >= 0");
  if (period < 1) throw ConfigError("positional encoding period must be >= 1");
  return sinusoidal_encoding(period, dim, dtype)[t % period];
}

torch::Tensor biased_causal_mask(std::int64_t t_query, std::int64_t t_key, std::int64_t period,
                                 torch::Dtype dtype) {
  if (t_query < 1 || t_key < 1) throw InputError("mask sizes must be >= 1");
  if (period < 1) throw ConfigError("mask period must be >= 1");
  auto mask = torch::empty({t_query, t_key}, opts(dtype));
  auto acc_fill = [&](auto acc) {
    for (std::int64_t i = 0; i < t_query; ++i) {
      for (std::int64_t j = 0; j < t_key; ++j) {
        if (j > i) {
          acc[i][j] = -std::numeric_limits<double>::infinity();
        } else {
          acc[i][j] = -static_cast<double>((i - j) / period);
        }
      }
    }
  };
  if (dtype == torch::kFloat64) acc_fill(mask.accessor<double, 2>());
  else acc_fill(mask.accessor<float, 2>());
  return mask;
}

torch::Tensor alignment_bias(std::int64_t t_query, std::int64_t t_key, double slope,
                             torch::Dtype dtype) {
  if (t_query < 1 || t_key < 1) throw InputError("bias sizes must be >= 1");
  if (slope < 0) throw ConfigError("alignment slope must be >= 0");
  auto bias = torch::empty({t_query, t_key}, opts(dtype));
  auto acc_fill = [&](auto acc) {
    for (std::int64_t i = 0; i < t_query; ++i) {
      std::int64_t aligned = i * t_key / t_query;
      for (std::int64_t j = 0; j < t_key; ++j) {
        acc[i][j] = -slope * static_cast<double>(std::llabs(j - aligned));
      }
    }
  };
  if (dtype == torch::kFloat64) acc_fill(bias.accessor<double, 2>());
  else acc_fill(bias.accessor<float, 2>());
  return bias;
}

MotionDecoder::MotionDecoder(const ModelConfig& cfg)
    : vertex_count_(cfg.vertex_count),
      period_(cfg.period),
      alignment_slope_(cfg.alignment_slope),
      dtype_(cfg.dtype) {
  in_proj_ = register_module(
      "in_proj", std::make_shared<Linear>(cfg.vertex_count * 3, cfg.decoder_dim, cfg.dtype));
  style_proj_ = register_module(
      "style_proj", std::make_shared<Linear>(cfg.style_dim, cfg.decoder_dim, cfg.dtype));
  audio_proj_ = register_module(
      "audio_proj", std::make_shared<Linear>(cfg.audio_dim, cfg.decoder_dim, cfg.dtype));
  content_proj_ = register_module(
      "content_proj", std::make_shared<Linear>(cfg.motion_dim, cfg.decoder_dim, cfg.dtype));
  source_embed_ = register_parameter(
      "source_embed", torch::zeros({2, cfg.decoder_dim}, opts(cfg.dtype)).uniform_(-0.1, 0.1));
  for (std::int64_t l = 0; l < cfg.decoder_layers; ++l) {
    Layer layer;
    auto tag = std::to_string(l);
    layer.self_attn = register_module(
        "self_attn" + tag, std::make_shared<MultiheadAttention>(cfg.decoder_dim, cfg.heads,
                                                                cfg.dtype));
    layer.cross_attn = register_module(
        "cross_attn" + tag, std::make_shared<MultiheadAttention>(cfg.decoder_dim, cfg.heads,
                                                                 cfg.dtype));
    layer.ff = register_module(
        "ff" + tag, std::make_shared<FeedForward>(cfg.decoder_dim,
                                                  cfg.decoder_dim * cfg.ff_multiplier, cfg.dtype));
    layer.norm1 = register_module("norm1_" + tag,
                                  std::make_shared<LayerNorm>(cfg.decoder_dim, cfg.dtype));
    layer.norm2 = register_module("norm2_" + tag,
                                  std::make_shared<LayerNorm>(cfg.decoder_dim, cfg.dtype));
    layer.norm3 = register_module("norm3_" + tag,
                                  std::make_shared<LayerNorm>(cfg.decoder_dim, cfg.dtype));
    layers_.push_back(layer);
  }
  out_proj_ = register_module(
      "out_proj",
      std::make_shared<Linear>(cfg.decoder_dim, cfg.vertex_count * 3, cfg.dtype));
  // Zero head: the untrained decoder emits the template.
  torch::NoGradGuard no_grad;
  out_proj_->weight.zero_();
  out_proj_->bias.zero_();
}

torch::Tensor MotionDecoder::forward(const torch::Tensor& history, const torch::Tensor& audio,
                                     const torch::Tensor& content, const torch::Tensor& style,
                                     const torch::Tensor& template_verts) const {
  const auto b = history.size(0);
  const auto t = history.size(1);
  const auto t_audio = audio.size(1);
  const auto t_content = content.size(1);
  if (history.size(2) != vertex_count_) throw ConfigError("decoder: vertex count mismatch");
  if (t > t_audio) {
    throw InputError("decode step " + std::to_string(t) + " beyond available audio frames (" +
                     std::to_string(t_audio) + ")");
  }

  auto displacements = (history - template_verts.unsqueeze(1)).reshape({b, t, -1});
  auto tokens = in_proj_->forward(displacements) + style_proj_->forward(style).unsqueeze(1);
  auto positions = sinusoidal_encoding(period_, tokens.size(-1), dtype_);
  auto idx = torch::arange(t, torch::kInt64).remainder(period_);
  tokens = tokens + positions.index_select(0, idx);

  auto self_bias = biased_causal_mask(t, t, period_, dtype_);
  auto cross_bias = torch::cat({alignment_bias(t, t_audio, alignment_slope_, dtype_),
                                alignment_bias(t, t_content, alignment_slope_, dtype_)},
                               1);
  auto memory = torch::cat({audio_proj_->forward(audio) + source_embed_[0],
                            content_proj_->forward(content) + source_embed_[1]},
                           1);

  auto x = tokens;
  for (const auto& layer : layers_) {
    x = layer.norm1->forward(x + layer.self_attn->forward(x, x, x, self_bias));
    x = layer.norm2->forward(x + layer.cross_attn->forward(x, memory, memory, cross_bias));
    x = layer.norm3->forward(x + layer.ff->forward(x));
  }
  auto out = out_proj_->forward(x).reshape({b, t, vertex_count_, 3});
  return out + template_verts.unsqueeze(1);
}

torch::Tensor MotionDecoder::decode_step(DecoderState& state, const torch::Tensor& audio,
                                         const torch::Tensor& content, const torch::Tensor& style,
                                         const torch::Tensor& template_verts) const {
  if (state.step != static_cast<std::int64_t>(state.generated.size())) {
    throw InputError("decoder state inconsistent: step does not match generated frames");
  }
  std::vector<torch::Tensor> rows;
  rows.reserve(state.generated.size() + 1);
  rows.push_back(template_verts);  // sole history token at the first step
  for (const auto& f : state.generated) rows.push_back(f);
  auto history = torch::stack(rows, 1);
  auto preds = forward(history, audio, content, style, template_verts);
  auto next = preds.select(1, preds.size(1) - 1);
  state.generated.push_back(next);
  state.step += 1;
  return next;
}

torch::Tensor MotionDecoder::decode_teacher_forced(const torch::Tensor& ground_truth,
                                                   const torch::Tensor& audio,
                                                   const torch::Tensor& content,
                                                   const torch::Tensor& style,
                                                   const torch::Tensor& template_verts) const {
  const auto t = ground_truth.size(1);
  auto history = t == 1 ? template_verts.unsqueeze(1)
                        : torch::cat({template_verts.unsqueeze(1),
                                      ground_truth.slice(1, 0, t - 1)},
                                     1);
  return forward(history, audio, content, style, template_verts);
}

torch::Tensor MotionDecoder::decode_sequence(std::int64_t frames, const torch::Tensor& audio,
                                             const torch::Tensor& content,
                                             const torch::Tensor& style,
                                             const torch::Tensor& template_verts) const {
  DecoderState state;
  for (std::int64_t t = 0; t < frames; ++t) {
    decode_step(state, audio, content, style, template_verts);
  }
  return torch::stack(state.generated, 1);
}

}  // namespace talkmesh
