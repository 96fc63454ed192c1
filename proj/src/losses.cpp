#include "talkmesh/losses.hpp"

#include <algorithm>
#include <cmath>

namespace talkmesh {
namespace losses {

void LossWeights::validate(std::int64_t batch_size) const {
  const double nonneg[] = {w1, w2, w3, alpha1, alpha2, alpha3, beta1, beta2,
                           beta3, beta4, beta5, beta_cos, alpha_pos, beta_neg, alpha_c_max};
  for (double v : nonneg) {
    if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (!(tau > 0)) throw ConfigError("temperature tau must be > 0");
  if (lambda < 0 || lambda > 1) throw ConfigError("lambda must be in [0, 1]");
  if (info_sign != 1 && info_sign != -1) throw ConfigError("info_sign must be +1 or -1");
  auto k = effective_top_k(batch_size);
  if (k < 1 || k > batch_size) throw ConfigError("top_k must be in [1, batch size]");
}

std::int64_t LossWeights::effective_top_k(std::int64_t batch_size) const {
  if (top_k > 0) return top_k;
  return std::min<std::int64_t>(batch_size, std::max<std::int64_t>(2, batch_size / 2));
}

namespace {

struct GradReverse : torch::autograd::Function<GradReverse> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, torch::Tensor x,
                               double alpha_c) {
    ctx->saved_data["alpha_c"] = alpha_c;
    return x.clone();
  }
  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    double alpha_c = ctx->saved_data["alpha_c"].toDouble();
    return {grads[0] * (-alpha_c), torch::Tensor()};
  }
};

torch::Tensor frame_norm_mean(const torch::Tensor& diff, std::int64_t frames_divisor) {
  // diff: T x F (frame vectors); sum of row norms divided by the sequence
  // length. The clamp keeps sqrt differentiable on exactly-zero rows.
  auto norms = diff.pow(2).sum(-1).clamp_min(1e-24).sqrt();
  return norms.sum() / static_cast<double>(frames_divisor);
}

}  // namespace

torch::Tensor grl(const torch::Tensor& x, double alpha_c) {
  return GradReverse::apply(x, alpha_c);
}

torch::Tensor guarded_cosine(const torch::Tensor& u, const torch::Tensor& v, std::int64_t dim,
                             double eps) {
  auto dot = (u * v).sum(dim);
  auto denom = u.norm(2, dim) * v.norm(2, dim) + eps;
  return dot / denom;
}

torch::Tensor adversarial_loss(const torch::Tensor& content, const torch::Tensor& labels,
                               const std::function<torch::Tensor(const torch::Tensor&)>& classifier,
                               double alpha_c) {
  auto pooled = content.dim() == 3 ? content.mean(1) : content;  // B x D
  auto logits = classifier(grl(pooled, alpha_c));                // B x K
  const auto num_classes = logits.size(-1);
  auto idx = labels.to(torch::kInt64);
  if ((idx < 0).any().item<bool>() || (idx >= num_classes).any().item<bool>()) {
    throw InputError("adversarial loss: label index out of range");
  }
  auto log_probs = torch::log_softmax(logits, -1);
  return -log_probs.gather(1, idx.unsqueeze(1)).mean();
}

torch::Tensor style_similarity_loss(const torch::Tensor& s_audio, const torch::Tensor& s_motion,
                                    const torch::Tensor& s_identity, double w1, double w2,
                                    double w3) {
  auto term = [&](const torch::Tensor& a, const torch::Tensor& b) {
    return (1.0 - guarded_cosine(a, b)).mean();
  };
  return w1 * term(s_audio, s_motion) + w2 * term(s_audio, s_identity) +
         w3 * term(s_motion, s_identity);
}

torch::Tensor adaptive_average_pool_frames(const torch::Tensor& x, std::int64_t out_frames) {
  const auto frames = x.size(-2);
  if (out_frames < 1) throw InputError("pooled frame count must be >= 1");
  if (frames == out_frames) return x;
  std::vector<torch::Tensor> bins;
  bins.reserve(static_cast<std::size_t>(out_frames));
  for (std::int64_t i = 0; i < out_frames; ++i) {
    auto lo = i * frames / out_frames;
    auto hi = std::max((i + 1) * frames / out_frames, lo + 1);
    bins.push_back(x.slice(-2, lo, hi).mean(-2));
  }
  return torch::stack(bins, -2);
}

torch::Tensor orthogonality_loss(const torch::Tensor& content, const torch::Tensor& style) {
  auto c = content.dim() == 2 ? content.unsqueeze(0) : content;
  auto s = style.dim() == 2 ? style.unsqueeze(0) : style;
  if (c.size(0) != s.size(0)) throw ConfigError("orthogonality loss: batch size mismatch");
  const auto common = std::min(c.size(1), s.size(1));
  auto cp = adaptive_average_pool_frames(c, common);
  auto sp = adaptive_average_pool_frames(s, common);
  auto p = torch::matmul(cp.transpose(1, 2), sp);  // B x D_c x D_s
  auto eye = torch::eye(p.size(1), p.options());
  auto gram = torch::matmul(p, p.transpose(1, 2)) - eye;
  return gram.pow(2).sum({1, 2}).clamp_min(1e-30).sqrt().mean();
}

torch::Tensor mutual_info_loss(const torch::Tensor& u, const torch::Tensor& v, double tau,
                               int sign) {
  if (!(tau > 0)) throw ConfigError("temperature tau must be > 0");
  if (u.size(0) != v.size(0)) throw ConfigError("mutual info loss: batch size mismatch");
  auto sims = guarded_cosine(u.unsqueeze(1), v.unsqueeze(0), -1) / tau;  // B x B
  auto diag = sims.diagonal();
  auto loss = (torch::logsumexp(sims, 1) - diag).mean();
  return sign >= 0 ? loss : -loss;
}

torch::Tensor topk_contrastive_loss(const SimilarityMatrices& sims, std::int64_t k,
                                    double alpha_pos, double beta_neg, double lambda) {
  auto directional = [&](const torch::Tensor& e) {
    const auto b = e.size(0);
    if (k < 1 || k > b) throw ConfigError("top_k must be in [1, batch size]");
    auto order = e.argsort(1, /*descending=*/true);          // detached index path
    auto selected = order.slice(1, 0, k);                     // B x k
    auto rows = torch::arange(b, torch::kInt64).unsqueeze(1);
    auto has_diag = (selected == rows).any(1);
    // Force-include the positive: it replaces the smallest selected key.
    auto fixed = selected.clone();
    fixed.select(1, k - 1).masked_scatter_(
        ~has_diag, torch::arange(b, torch::kInt64).masked_select(~has_diag));
    auto chosen = e.gather(1, fixed);                         // B x k
    auto diag = e.diagonal();
    auto per_row = -alpha_pos * (diag - std::log(beta_neg) - torch::logsumexp(chosen, 1));
    return per_row.mean();
  };
  return lambda * directional(sims.audio_to_content) +
         (1.0 - lambda) * directional(sims.content_to_audio);
}

Moments feature_moments(const torch::Tensor& features, double variance_floor) {
  auto flat = features.reshape({-1, features.size(-1)});
  auto mean = flat.mean(0);
  auto var = (flat - mean).pow(2).mean(0) + variance_floor;
  return {mean, var.sqrt()};
}

torch::Tensor kl_alignment_loss(const Moments& audio, const Moments& motion) {
  auto va = audio.std.pow(2);
  auto vc = motion.std.pow(2);
  auto terms = torch::log(vc / va) + (va + (audio.mean - motion.mean).pow(2)) / vc - 1.0;
  return 0.5 * terms.sum();
}

SimilarityMatrices similarity_matrices(const torch::Tensor& audio, const torch::Tensor& motion,
                                       double tau) {
  if (!(tau > 0)) throw ConfigError("temperature tau must be > 0");
  auto a = audio.dim() == 3 ? audio.mean(1) : audio;    // B x D
  auto c = motion.dim() == 3 ? motion.mean(1) : motion;
  if (a.size(-1) != c.size(-1)) {
    throw ConfigError("contrastive loss: audio and motion feature dims must match");
  }
  auto ac = guarded_cosine(a.unsqueeze(1), c.unsqueeze(0), -1) / tau;
  auto ca = guarded_cosine(c.unsqueeze(1), a.unsqueeze(0), -1) / tau;
  return {ac, ca};
}

torch::Tensor contrastive_total(const torch::Tensor& audio, const torch::Tensor& motion,
                                const LossWeights& weights) {
  const auto b = audio.size(0);
  weights.validate(b);
  auto sims = similarity_matrices(audio, motion, weights.tau);
  auto topk = topk_contrastive_loss(sims, weights.effective_top_k(b), weights.alpha_pos,
                                    weights.beta_neg, weights.lambda);
  auto kl = kl_alignment_loss(feature_moments(audio), feature_moments(motion));
  return topk + kl;
}

MotionLossTerms motion_losses(const std::vector<torch::Tensor>& pred,
                              const std::vector<torch::Tensor>& gt,
                              const std::vector<std::int64_t>& lip_indices, double alpha1,
                              double alpha2, double alpha3) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw ConfigError("motion losses: need equally many non-empty prediction/target sequences");
  }
  if (lip_indices.empty() && alpha2 > 0) {
    throw ConfigError("motion losses: lip mask empty while the mouth weight is positive");
  }
  auto lips = lip_indices.empty()
                  ? torch::Tensor()
                  : torch::tensor(lip_indices, torch::kInt64);
  torch::Tensor rec, mou, vel;
  const auto n = static_cast<std::int64_t>(pred.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& p = pred[static_cast<std::size_t>(i)];
    const auto& g = gt[static_cast<std::size_t>(i)];
    if (!p.sizes().equals(g.sizes())) throw ConfigError("motion losses: shape mismatch");
    const auto t = p.size(0);
    auto dp = (p - g).reshape({t, -1});
    auto r = frame_norm_mean(dp, t);
    torch::Tensor m;
    if (lips.defined()) {
      auto diff_lips = (p.index_select(1, lips) - g.index_select(1, lips)).reshape({t, -1});
      m = frame_norm_mean(diff_lips, t);
    } else {
      m = torch::zeros({}, p.options());
    }
    torch::Tensor v;
    if (t >= 2) {
      auto vp = (p.slice(0, 1) - p.slice(0, 0, t - 1)) - (g.slice(0, 1) - g.slice(0, 0, t - 1));
      v = frame_norm_mean(vp.reshape({t - 1, -1}), t);
    } else {
      v = torch::zeros({}, p.options());
    }
    rec = rec.defined() ? rec + r : r;
    mou = mou.defined() ? mou + m : m;
    vel = vel.defined() ? vel + v : v;
  }
  MotionLossTerms out;
  out.reconstruction = rec / static_cast<double>(n);
  out.mouth = mou / static_cast<double>(n);
  out.velocity = vel / static_cast<double>(n);
  out.total = alpha1 * out.reconstruction + alpha2 * out.mouth + alpha3 * out.velocity;
  return out;
}

torch::Tensor total_loss(const torch::Tensor& motion, const torch::Tensor& adversarial,
                         const torch::Tensor& orthogonality, const torch::Tensor& mutual_info,
                         const torch::Tensor& contrastive, const LossWeights& weights) {
  return weights.beta1 * motion + weights.beta2 * adversarial + weights.beta3 * orthogonality +
         weights.beta4 * mutual_info + weights.beta5 * contrastive;
}

}  // namespace losses
}  // namespace talkmesh
