#include "talkmesh/encoders.hpp"

#include <cmath>

namespace talkmesh {

void ModelConfig::validate() const {
  if (vertex_count <= 0) throw ConfigError("model config: vertex_count must be positive");
  if (num_identities <= 0) throw ConfigError("model config: num_identities must be positive");
  const std::pair<std::int64_t, const char*> positive_fields[] = {
      {style_dim, "style_dim"},       {audio_dim, "audio_dim"},
      {motion_dim, "motion_dim"},     {graph_dim, "graph_dim"},
      {graph_layers, "graph_layers"}, {frontend_dim, "frontend_dim"},
      {heads, "heads"},               {encoder_layers, "encoder_layers"},
      {decoder_layers, "decoder_layers"}, {decoder_dim, "decoder_dim"},
      {period, "period"},             {classifier_hidden, "classifier_hidden"}};
  for (const auto& [v, name] : positive_fields) {
    if (v <= 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  }
  if (alignment_slope < 0) throw ConfigError("model config: alignment_slope must be >= 0");
}

torch::Tensor IdentityLabel::one_hot(torch::Dtype dtype) const {
  if (index < 0 || index >= num_identities) {
    throw InputError("identity index " + std::to_string(index) + " out of range");
  }
  auto v = torch::zeros({num_identities}, opts(dtype));
  v[index] = 1;
  return v;
}

IdentityLabel IdentityLabel::from_one_hot(const torch::Tensor& one_hot) {
  if (one_hot.dim() != 1) throw InputError("one-hot identity must be 1-D");
  auto nonzero = one_hot.nonzero();
  if (nonzero.size(0) != 1) {
    throw InputError("one-hot identity must have exactly one nonzero entry");
  }
  auto idx = nonzero[0][0].item<std::int64_t>();
  if (std::abs(one_hot[idx].item<double>() - 1.0) > 0) {
    throw InputError("one-hot identity entry must equal 1");
  }
  return {idx, one_hot.size(0)};
}

AudioContentEncoder::AudioContentEncoder(const ModelConfig& cfg) : dtype_(cfg.dtype) {
  frontend = register_module("frontend",
                             std::make_shared<AudioFrontend>(cfg.mel, cfg.frontend_dim, cfg.dtype));
  proj_ = register_module("proj",
                          std::make_shared<Linear>(cfg.frontend_dim, cfg.audio_dim, cfg.dtype));
  encoder_ = register_module(
      "encoder", std::make_shared<TransformerEncoder>(cfg.audio_dim, cfg.heads, cfg.encoder_layers,
                                                      cfg.audio_dim * cfg.ff_multiplier,
                                                      cfg.dtype));
}

torch::Tensor AudioContentEncoder::forward(const AudioClip& clip,
                                           std::int64_t target_frames) const {
  return forward_batch({clip}, target_frames).squeeze(0);
}

torch::Tensor AudioContentEncoder::forward_batch(const std::vector<AudioClip>& clips,
                                                 std::int64_t target_frames) const {
  std::vector<torch::Tensor> rows;
  rows.reserve(clips.size());
  for (const auto& clip : clips) rows.push_back(frontend->forward(clip, target_frames));
  auto x = proj_->forward(torch::stack(rows));  // B x T x D_a
  x = x + sinusoidal_encoding(target_frames, x.size(-1), dtype_);
  return encoder_->forward(x);
}

AudioStyleEncoder::AudioStyleEncoder(const ModelConfig& cfg) {
  speaker_branch = register_module(
      "speaker_branch", std::make_shared<AudioFrontend>(cfg.mel, cfg.frontend_dim, cfg.dtype));
  affect_branch = register_module(
      "affect_branch", std::make_shared<AudioFrontend>(cfg.mel, cfg.frontend_dim, cfg.dtype));
  proj_ = register_module(
      "proj", std::make_shared<Linear>(2 * cfg.frontend_dim, cfg.style_dim, cfg.dtype));
}

StyleEncoding AudioStyleEncoder::forward(const AudioClip& clip) const {
  auto enc = forward_batch({clip});
  return {enc.tokens, {enc.code.vector, StyleSource::kAudio}};
}

StyleEncoding AudioStyleEncoder::forward_batch(const std::vector<AudioClip>& clips) const {
  std::vector<torch::Tensor> tokens;
  std::vector<torch::Tensor> codes;
  for (const auto& clip : clips) {
    auto speaker = speaker_branch->forward(clip);
    auto affect = affect_branch->forward(clip);
    auto tok = proj_->forward(torch::cat({speaker, affect}, /*dim=*/1));  // F x D_s
    tokens.push_back(tok);
    codes.push_back(tok.mean(0));
  }
  // Clips may differ in length; tokens are stacked only when they agree.
  torch::Tensor token_batch;
  bool uniform = true;
  for (const auto& t : tokens) uniform = uniform && t.size(0) == tokens.front().size(0);
  if (uniform) token_batch = torch::stack(tokens);
  return {token_batch, {torch::stack(codes), StyleSource::kAudio}};
}

MotionStyleEncoder::MotionStyleEncoder(const ModelConfig& cfg) : style_dim_(cfg.style_dim) {
  down_ = register_module(
      "down",
      std::make_shared<Linear>(cfg.vertex_count * cfg.graph_dim, cfg.style_dim, cfg.dtype));
  for (int i = 0; i < 2; ++i) {
    auto conv = std::make_shared<Conv1d>(cfg.style_dim, cfg.style_dim, 3,
                                         Conv1d::Padding::kValid, cfg.dtype);
    register_module("conv" + std::to_string(i), conv);
    convs_.push_back(conv);
  }
  encoder_ = register_module(
      "encoder", std::make_shared<TransformerEncoder>(cfg.style_dim, cfg.heads,
                                                      cfg.encoder_layers,
                                                      cfg.style_dim * cfg.ff_multiplier,
                                                      cfg.dtype));
}

std::int64_t MotionStyleEncoder::min_frames() const {
  std::int64_t shrink = 0;
  for (const auto& c : convs_) shrink += c->kernel() - 1;
  return shrink + 1;
}

StyleEncoding MotionStyleEncoder::forward(const torch::Tensor& graph_features) const {
  auto g = graph_features.dim() == 3 ? graph_features.unsqueeze(0) : graph_features;
  const auto b = g.size(0);
  const auto t = g.size(1);
  if (t < min_frames()) {
    throw InputError("motion style encoder needs at least " + std::to_string(min_frames()) +
                     " frames, got " + std::to_string(t));
  }
  auto x = down_->forward(g.reshape({b, t, -1}));  // B x T x D_s
  x = x.transpose(1, 2);                           // B x D_s x T
  for (const auto& conv : convs_) x = torch::leaky_relu(conv->forward(x), 0.2);
  auto tokens = encoder_->forward(x.transpose(1, 2));  // B x T' x D_s
  auto code = tokens.mean(1);
  return {tokens, {code, StyleSource::kMotion}};
}

MotionContentEncoder::MotionContentEncoder(const ModelConfig& cfg) : dtype_(cfg.dtype) {
  down_ = register_module(
      "down",
      std::make_shared<Linear>(cfg.vertex_count * cfg.graph_dim, cfg.motion_dim, cfg.dtype));
  for (int i = 0; i < 2; ++i) {
    auto conv = std::make_shared<Conv1d>(cfg.motion_dim, cfg.motion_dim, 3,
                                         Conv1d::Padding::kReplicate, cfg.dtype);
    register_module("conv" + std::to_string(i), conv);
    convs_.push_back(conv);
  }
  encoder_ = register_module(
      "encoder", std::make_shared<TransformerEncoder>(cfg.motion_dim, cfg.heads,
                                                      cfg.encoder_layers,
                                                      cfg.motion_dim * cfg.ff_multiplier,
                                                      cfg.dtype));
  head_ = register_module("head",
                          std::make_shared<Linear>(cfg.motion_dim, cfg.motion_dim, cfg.dtype));
}

torch::Tensor MotionContentEncoder::conv_block(const torch::Tensor& g,
                                               std::vector<torch::Tensor>* norm_taps) const {
  const auto b = g.size(0);
  const auto t = g.size(1);
  auto x = down_->forward(g.reshape({b, t, -1})).transpose(1, 2);  // B x D_m x T
  for (const auto& conv : convs_) {
    auto normed = instance_norm_time(conv->forward(x));
    if (norm_taps) norm_taps->push_back(normed);
    x = torch::leaky_relu(normed, 0.2);
  }
  return x;
}

torch::Tensor MotionContentEncoder::forward(const torch::Tensor& graph_features) const {
  auto g = graph_features.dim() == 3 ? graph_features.unsqueeze(0) : graph_features;
  auto x = conv_block(g, nullptr).transpose(1, 2);  // B x T x D_m
  x = x + sinusoidal_encoding(x.size(1), x.size(2), dtype_);
  auto out = head_->forward(encoder_->forward(x));
  return graph_features.dim() == 3 ? out.squeeze(0) : out;
}

std::vector<torch::Tensor> MotionContentEncoder::instance_norm_outputs(
    const torch::Tensor& graph_features) const {
  auto g = graph_features.dim() == 3 ? graph_features.unsqueeze(0) : graph_features;
  std::vector<torch::Tensor> taps;
  conv_block(g, &taps);
  return taps;
}

IdentityEncoder::IdentityEncoder(const ModelConfig& cfg)
    : num_identities_(cfg.num_identities), style_dim_(cfg.style_dim) {
  double bound = std::sqrt(6.0 / static_cast<double>(cfg.num_identities + cfg.style_dim));
  personal_map = register_parameter(
      "personal_map",
      torch::empty({cfg.num_identities, cfg.style_dim}, opts(cfg.dtype)).uniform_(-bound, bound));
  common_table = register_parameter(
      "common_table",
      torch::empty({cfg.num_identities, cfg.style_dim}, opts(cfg.dtype)).uniform_(-bound, bound));
  attn_q = register_module("attn_q",
                           std::make_shared<Linear>(cfg.style_dim, cfg.style_dim, cfg.dtype));
  attn_k = register_module("attn_k",
                           std::make_shared<Linear>(cfg.style_dim, cfg.style_dim, cfg.dtype));
  attn_v = register_module("attn_v",
                           std::make_shared<Linear>(cfg.style_dim, cfg.style_dim, cfg.dtype));
  attn_out = register_module("attn_out",
                             std::make_shared<Linear>(cfg.style_dim, cfg.style_dim, cfg.dtype));
}

StyleCode IdentityEncoder::forward(const std::vector<IdentityLabel>& labels) const {
  std::vector<std::int64_t> indices;
  indices.reserve(labels.size());
  for (const auto& label : labels) {
    if (label.num_identities != num_identities_) {
      throw InputError("identity label cardinality mismatch");
    }
    if (label.index < 0 || label.index >= num_identities_) {
      throw InputError("identity index out of range");
    }
    indices.push_back(label.index);
  }
  auto idx = torch::tensor(indices, torch::kInt64);
  auto personalized = personal_map.index_select(0, idx);  // B x D_s
  auto common = common_table.index_select(0, idx);        // B x D_s

  auto pair = torch::stack({personalized, common}, 1);    // B x 2 x D_s
  auto q = attn_q->forward(personalized).unsqueeze(1);    // B x 1 x D_s
  auto k = attn_k->forward(pair);
  auto v = attn_v->forward(pair);
  auto scores = torch::matmul(q, k.transpose(1, 2)) /
                std::sqrt(static_cast<double>(style_dim_));
  auto ctx = torch::matmul(torch::softmax(scores, -1), v).squeeze(1);
  return {personalized + attn_out->forward(ctx), StyleSource::kIdentity};
}

StyleCode fuse_styles(const StyleCode& audio, const StyleCode& motion,
                      const StyleCode& identity) {
  const auto d = audio.vector.size(-1);
  if (motion.vector.size(-1) != d || identity.vector.size(-1) != d) {
    throw ConfigError("style fusion requires a shared style dimension");
  }
  return {audio.vector + motion.vector + identity.vector, StyleSource::kFused};
}

}  // namespace talkmesh
