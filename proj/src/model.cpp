#include "talkmesh/model.hpp"

#include <cmath>

namespace talkmesh {

StyleClassifier::StyleClassifier(std::int64_t in_dim, std::int64_t hidden,
                                 std::int64_t num_classes, torch::Dtype dtype) {
  in_ = register_module("in", std::make_shared<Linear>(in_dim, hidden, dtype));
  out_ = register_module("out", std::make_shared<Linear>(hidden, num_classes, dtype));
}

torch::Tensor StyleClassifier::forward(const torch::Tensor& x) const {
  return out_->forward(torch::gelu(in_->forward(x)));
}

Model::Model(const ModelConfig& config, const MeshTopology& topology)
    : config_(config), topology_(topology) {
  config_.validate();
  topology_.validate();
  if (topology_.vertex_count != config_.vertex_count) {
    throw ConfigError("model config vertex_count does not match topology");
  }
  if (config_.audio_dim != config_.motion_dim) {
    throw ConfigError("contrastive alignment requires audio_dim == motion_dim");
  }
  graph_encoder = register_module(
      "graph", std::make_shared<GraphEncoder>(config_.graph_dim, config_.graph_layers,
                                              config_.dtype));
  audio_content_encoder =
      register_module("audio_content", std::make_shared<AudioContentEncoder>(config_));
  audio_style_encoder =
      register_module("audio_style", std::make_shared<AudioStyleEncoder>(config_));
  motion_style_encoder =
      register_module("motion_style", std::make_shared<MotionStyleEncoder>(config_));
  motion_content_encoder =
      register_module("motion_content", std::make_shared<MotionContentEncoder>(config_));
  identity_encoder = register_module("identity", std::make_shared<IdentityEncoder>(config_));
  decoder = register_module("decoder", std::make_shared<MotionDecoder>(config_));
  audio_classifier = register_module(
      "audio_classifier",
      std::make_shared<StyleClassifier>(config_.audio_dim, config_.classifier_hidden,
                                        config_.num_identities, config_.dtype));
  motion_classifier = register_module(
      "motion_classifier",
      std::make_shared<StyleClassifier>(config_.motion_dim, config_.classifier_hidden,
                                        config_.num_identities, config_.dtype));
}

std::vector<std::string> Model::style_parameter_names() const {
  std::vector<std::string> names;
  for (const auto& p : named_parameters()) {
    const auto& name = p.key();
    if (name.rfind("audio_style.", 0) == 0 || name.rfind("motion_style.", 0) == 0 ||
        name.rfind("identity.", 0) == 0) {
      names.push_back(name);
    }
  }
  return names;
}

torch::Tensor Model::encode_graph(const torch::Tensor& motion, bool use_graph) const {
  if (use_graph) return graph_encoder->forward(motion, topology_);
  MeshTopology stripped = topology_;
  stripped.edges.clear();  // self-loop-only attention
  return graph_encoder->forward(motion, stripped);
}

ForwardOutputs Model::training_forward(const Batch& batch, const losses::LossWeights& weights,
                                       double alpha_c, const AblationFlags& flags) const {
  const auto b = batch.motion.size(0);
  if (b < 1 || static_cast<std::int64_t>(batch.clips.size()) != b ||
      batch.labels.size(0) != b) {
    throw ConfigError("training batch: inconsistent sizes");
  }
  weights.validate(b);
  const auto t = batch.motion.size(1);
  auto zero = torch::zeros({}, opts(config_.dtype));

  auto graph_feats = encode_graph(batch.motion, flags.graph_encoder);
  auto motion_style = motion_style_encoder->forward(graph_feats);
  auto motion_content = motion_content_encoder->forward(graph_feats);
  auto audio_content = audio_content_encoder->forward_batch(batch.clips, t);
  auto audio_style = audio_style_encoder->forward_batch(batch.clips);
  auto identity_style = identity_encoder->forward([&] {
    std::vector<IdentityLabel> labels;
    for (std::int64_t i = 0; i < b; ++i) {
      labels.push_back({batch.labels[i].item<std::int64_t>(), config_.num_identities});
    }
    return labels;
  }());
  auto fused = fuse_styles(audio_style.code, motion_style.code, identity_style);

  auto predictions = decoder->decode_teacher_forced(batch.motion, audio_content, motion_content,
                                                    fused.vector, batch.templates);

  std::vector<torch::Tensor> pred_seqs, gt_seqs;
  for (std::int64_t i = 0; i < b; ++i) {
    pred_seqs.push_back(predictions[i]);
    gt_seqs.push_back(batch.motion[i]);
  }
  auto motion_terms = losses::motion_losses(pred_seqs, gt_seqs, topology_.lip_indices(),
                                            weights.alpha1, weights.alpha2, weights.alpha3);

  const bool audio_disent = flags.audio_disentanglement;
  const bool motion_disent = flags.motion_disentanglement;

  auto mean_of = [&](const torch::Tensor& a, const torch::Tensor& m, bool use_a, bool use_m) {
    if (use_a && use_m) return (a + m) / 2.0;
    if (use_a) return a;
    if (use_m) return m;
    return zero;
  };

  torch::Tensor adv = zero;
  if (flags.adversarial && (audio_disent || motion_disent)) {
    auto adv_audio = audio_disent
                         ? losses::adversarial_loss(
                               audio_content, batch.labels,
                               [&](const torch::Tensor& x) { return audio_classifier->forward(x); },
                               alpha_c)
                         : zero;
    auto adv_motion = motion_disent
                          ? losses::adversarial_loss(
                                motion_content, batch.labels,
                                [&](const torch::Tensor& x) { return motion_classifier->forward(x); },
                                alpha_c)
                          : zero;
    adv = mean_of(adv_audio, adv_motion, audio_disent, motion_disent);
  }

  torch::Tensor cos = zero;
  if (flags.style_similarity) {
    cos = losses::style_similarity_loss(audio_style.code.vector, motion_style.code.vector,
                                        identity_style.vector, weights.w1, weights.w2,
                                        weights.w3);
  }

  torch::Tensor orth = zero;
  if (flags.orthogonality && (audio_disent || motion_disent)) {
    auto orth_audio = audio_disent && audio_style.tokens.defined()
                          ? losses::orthogonality_loss(audio_content, audio_style.tokens)
                          : zero;
    auto orth_motion = motion_disent
                           ? losses::orthogonality_loss(motion_content, motion_style.tokens)
                           : zero;
    orth = mean_of(orth_audio, orth_motion, audio_disent && audio_style.tokens.defined(),
                   motion_disent);
  }

  torch::Tensor info = zero;
  if (flags.mutual_info && (audio_disent || motion_disent)) {
    auto info_audio = audio_disent
                          ? losses::mutual_info_loss(audio_style.code.vector,
                                                     audio_content.mean(1), weights.tau,
                                                     weights.info_sign)
                          : zero;
    auto info_motion = motion_disent
                           ? losses::mutual_info_loss(motion_style.code.vector,
                                                      motion_content.mean(1), weights.tau,
                                                      weights.info_sign)
                           : zero;
    info = mean_of(info_audio, info_motion, audio_disent, motion_disent);
  }

  torch::Tensor cts = zero;
  if (flags.contrastive) {
    cts = losses::contrastive_total(audio_content, motion_content, weights);
  }

  ForwardOutputs out;
  out.predictions = predictions;
  out.motion_terms = motion_terms;
  out.adversarial = adv;
  out.style_similarity = cos;
  out.orthogonality = orth;
  out.mutual_info = info;
  out.contrastive = cts;
  // The five-term combination plus the separately weighted style-similarity
  // constraint (which has no slot in the five-term mix).
  out.total = losses::total_loss(motion_terms.total, adv, orth, info, cts, weights) +
              weights.beta_cos * cos;
  out.audio_content = audio_content;
  out.motion_content = motion_content;
  out.style_audio = audio_style.code.vector;
  out.style_motion = motion_style.code.vector;
  out.style_identity = identity_style.vector;
  out.style_fused = fused.vector;
  return out;
}

MotionSequence Model::generate(const AudioClip& clip, const IdentityLabel& identity,
                               const torch::Tensor& template_verts,
                               std::optional<std::int64_t> frames,
                               const std::optional<MotionSequence>& style_reference,
                               std::int64_t refresh_every, double fps) const {
  torch::NoGradGuard no_grad;
  clip.validate();
  const auto t = frames.value_or(
      std::max<std::int64_t>(1, std::llround(clip.duration_seconds() * fps)));

  auto tmpl = template_verts.to(config_.dtype).unsqueeze(0);  // 1 x N_v x 3
  auto audio_content = audio_content_encoder->forward_batch({clip}, t);
  auto s_a = audio_style_encoder->forward_batch({clip}).code.vector;
  auto s_p = identity_encoder->forward({identity}).vector;

  torch::Tensor s_m;
  const bool pinned_style = style_reference.has_value();
  if (pinned_style) {
    auto ref = style_reference->frames.to(config_.dtype).unsqueeze(0);
    s_m = motion_style_encoder->forward(encode_graph(ref, true)).code.vector;
  } else {
    s_m = torch::zeros_like(s_a);
  }

  auto content_of = [&](const torch::Tensor& prefix) {
    return motion_content_encoder->forward(encode_graph(prefix, true));
  };
  auto fused = [&] { return s_a + s_m + s_p; };

  auto rollout = [&](const torch::Tensor& initial_content, bool allow_refresh) {
    DecoderState state;
    auto content = initial_content;
    for (std::int64_t step = 0; step < t; ++step) {
      decoder->decode_step(state, audio_content, content, fused(), tmpl);
      const bool refresh = allow_refresh && refresh_every > 0 && state.step < t &&
                           state.step % refresh_every == 0;
      if (refresh) {
        auto prefix = torch::stack(state.generated, 1);
        auto g = encode_graph(prefix, true);
        if (!pinned_style && prefix.size(1) >= motion_style_encoder->min_frames()) {
          s_m = motion_style_encoder->forward(g).code.vector;
        }
        content = motion_content_encoder->forward(g);
      }
    }
    return torch::stack(state.generated, 1);
  };

  auto first_pass = rollout(content_of(tmpl.unsqueeze(1)), /*allow_refresh=*/true);
  torch::Tensor final_frames = first_pass;
  if (refresh_every == 0) {
    // Two-pass scheme: re-encode the full first pass, then decode again.
    auto g = encode_graph(first_pass, true);
    if (!pinned_style) s_m = motion_style_encoder->forward(g).code.vector;
    final_frames = rollout(motion_content_encoder->forward(g), /*allow_refresh=*/false);
  }

  MotionSequence out;
  out.frames = final_frames.squeeze(0).to(torch::kFloat32);
  out.fps = static_cast<float>(fps);
  return out;
}

Model::EncodedFeatures Model::encode_features(const data::TrainingExample& example) const {
  torch::NoGradGuard no_grad;
  auto motion = example.motion.frames.to(config_.dtype).unsqueeze(0);
  auto g = encode_graph(motion, true);
  auto motion_style = motion_style_encoder->forward(g);
  auto motion_content = motion_content_encoder->forward(g);
  auto audio_content = audio_content_encoder->forward_batch({example.audio}, motion.size(1));
  auto audio_style = audio_style_encoder->forward_batch({example.audio});
  auto identity_style = identity_encoder->forward({example.identity});
  auto fused = fuse_styles(audio_style.code, motion_style.code, identity_style);
  EncodedFeatures f;
  f.audio_content_pooled = audio_content.mean(1).squeeze(0);
  f.motion_content_pooled = motion_content.mean(1).squeeze(0);
  f.style_fused = fused.vector.squeeze(0);
  return f;
}

}  // namespace talkmesh
