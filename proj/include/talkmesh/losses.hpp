#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/common.hpp"

namespace talkmesh {
namespace losses {

/// Every weight and hyperparameter of the training objective.
struct LossWeights {
  double w1 = 1.0, w2 = 1.0, w3 = 1.0;          // style similarity pair weights
  double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 0.5;  // motion loss mix
  double beta1 = 1.0, beta2 = 0.1, beta3 = 1e-5, beta4 = 0.1, beta5 = 0.1;  // total mix
  double beta_cos = 0.1;      // style similarity contribution to the objective
  double lambda = 0.5;        // contrastive direction mix
  double tau = 0.1;           // temperature
  std::int64_t top_k = 0;     // 0: use max(2, B/2) at call time
  double alpha_pos = 1.0;     // positive sample weight
  double beta_neg = 1.0;      // negative sample weight
  double alpha_c_max = 1.0;   // gradient reversal strength ceiling
  int info_sign = +1;         // +1 keeps the printed formula; -1 flips it

  void validate(std::int64_t batch_size) const;
  std::int64_t effective_top_k(std::int64_t batch_size) const;
};

/// Gradient reversal: identity forward, gradients scaled by -alpha_c on the
/// way back.
torch::Tensor grl(const torch::Tensor& x, double alpha_c);

/// Cosine similarity with an epsilon-guarded denominator (never divides by
/// zero, even for zero-norm vectors).
torch::Tensor guarded_cosine(const torch::Tensor& u, const torch::Tensor& v,
                             std::int64_t dim = -1, double eps = 1e-6);

/// Softmax cross-entropy of style-classifier logits against identity labels
/// after temporal pooling and gradient reversal of the content features.
/// content: B x T x D, labels: B (int64), classifier: logits = f(pooled).
torch::Tensor adversarial_loss(const torch::Tensor& content, const torch::Tensor& labels,
                               const std::function<torch::Tensor(const torch::Tensor&)>& classifier,
                               double alpha_c);

/// Weighted sum of one-minus-cosine over the three style pairs. Inputs are
/// D or B x D; batch inputs are averaged.
torch::Tensor style_similarity_loss(const torch::Tensor& s_audio, const torch::Tensor& s_motion,
                                    const torch::Tensor& s_identity, double w1, double w2,
                                    double w3);

/// Adaptive average pooling over the frame axis: F frames into bins
/// [floor(i*F/F'), floor((i+1)*F/F')).
torch::Tensor adaptive_average_pool_frames(const torch::Tensor& x, std::int64_t out_frames);

/// Procrustes-style orthogonality penalty between content (B x F_c x D_c)
/// and style (B x F_s x D_s) features: both pooled to F = min(F_c, F_s)
/// frames, P_b = pooled_content^T pooled_style, loss = mean_b ||P P^T - I||_F.
torch::Tensor orthogonality_loss(const torch::Tensor& content, const torch::Tensor& style);

/// InfoNCE over cosine similarities between row-paired batches (B x D).
/// sign=-1 flips the objective.
torch::Tensor mutual_info_loss(const torch::Tensor& u, const torch::Tensor& v, double tau,
                               int sign = +1);

struct SimilarityMatrices {
  torch::Tensor audio_to_content;  // B x B
  torch::Tensor content_to_audio;  // B x B
};

/// Top-k bidirectional contrastive loss. Per row the denominator keeps the
/// k most similar keys; the diagonal is force-included (it replaces the
/// smallest selected key when absent).
torch::Tensor topk_contrastive_loss(const SimilarityMatrices& sims, std::int64_t k,
                                    double alpha_pos, double beta_neg, double lambda);

struct Moments {
  torch::Tensor mean;  // D
  torch::Tensor std;   // D, floored away from zero
};

/// Per-dimension empirical moments over all leading axes (batch and time).
Moments feature_moments(const torch::Tensor& features, double variance_floor = 1e-6);

/// Diagonal-Gaussian KL divergence from the audio moments to the motion
/// moments, summed over dimensions.
torch::Tensor kl_alignment_loss(const Moments& audio, const Moments& motion);

/// Cosine similarity matrices of temporally mean-pooled features, scaled by
/// 1/tau.
SimilarityMatrices similarity_matrices(const torch::Tensor& audio, const torch::Tensor& motion,
                                       double tau);

/// Top-k contrastive term plus the KL alignment term on raw features.
/// audio: B x T_a x D, motion: B x T_c x D.
torch::Tensor contrastive_total(const torch::Tensor& audio, const torch::Tensor& motion,
                                const LossWeights& weights);

struct MotionLossTerms {
  torch::Tensor reconstruction;
  torch::Tensor mouth;
  torch::Tensor velocity;
  torch::Tensor total;
};

/// Per-frame Euclidean norms of frame-vector differences, averaged per
/// sequence then over the batch; the mouth term restricts to lip vertices
/// and the velocity term runs on first differences. Sequences may differ in
/// length. pred/gt: per sequence T_n x N_v x 3.
MotionLossTerms motion_losses(const std::vector<torch::Tensor>& pred,
                              const std::vector<torch::Tensor>& gt,
                              const std::vector<std::int64_t>& lip_indices, double alpha1,
                              double alpha2, double alpha3);

/// Weighted total objective.
torch::Tensor total_loss(const torch::Tensor& motion, const torch::Tensor& adversarial,
                         const torch::Tensor& orthogonality, const torch::Tensor& mutual_info,
                         const torch::Tensor& contrastive, const LossWeights& weights);

}  // namespace losses
}  // namespace talkmesh
