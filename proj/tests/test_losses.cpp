#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "talkmesh/losses.hpp"

using namespace talkmesh;
using namespace talkmesh::losses;

namespace {

double cosine_ref(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  return dot / (std::sqrt(nu) * std::sqrt(nv) + 1e-6);
}

std::vector<double> to_vec(const torch::Tensor& t) {
  auto flat = t.reshape({-1}).to(torch::kFloat64).contiguous();
  return {flat.data_ptr<double>(), flat.data_ptr<double>() + flat.numel()};
}

}  // namespace

TEST_CASE("grl forward is the exact identity") {
  torch::manual_seed(0);
  auto x = torch::randn({3, 5}, torch::kFloat64);
  CHECK(torch::equal(grl(x, 0.7), x));
}

TEST_CASE("grl with zero strength kills the gradient") {
  auto x = torch::randn({4}, torch::TensorOptions().dtype(torch::kFloat64).requires_grad(true));
  auto y = (grl(x, 0.0) * 3.0).sum();
  auto g = torch::autograd::grad({y}, {x})[0];
  CHECK(g.abs().max().item<double>() == 0.0);
}

TEST_CASE("grl scales gradients by minus alpha") {
  auto x = torch::randn({4}, torch::TensorOptions().dtype(torch::kFloat64).requires_grad(true));
  auto w = torch::randn({4}, torch::kFloat64);
  auto g_rev = torch::autograd::grad({(grl(x, 1.7) * w).sum()}, {x})[0];
  auto g_plain = torch::autograd::grad({(x * w).sum()}, {x})[0];
  CHECK(torch::allclose(g_rev, -1.7 * g_plain, 1e-12, 1e-12));
}

TEST_CASE("adversarial loss") {
  SUBCASE("uniform logits give log K") {
    auto content = torch::randn({3, 4, 6}, torch::kFloat64);
    auto labels = torch::tensor({0, 1, 2}, torch::kInt64);
    auto loss = adversarial_loss(
        content, labels, [](const torch::Tensor& x) {
          return torch::zeros({x.size(0), 5}, x.options());
        },
        1.0);
    CHECK(loss.item<double>() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
  SUBCASE("confident correct logits push the loss to zero") {
    auto content = torch::randn({2, 3, 4}, torch::kFloat64);
    auto labels = torch::tensor({1, 0}, torch::kInt64);
    auto loss = adversarial_loss(
        content, labels, [&](const torch::Tensor& x) {
          auto logits = torch::zeros({x.size(0), 3}, x.options());
          logits[0][1] = 50.0;
          logits[1][0] = 50.0;
          return logits;
        },
        1.0);
    CHECK(loss.item<double>() < 1e-12);
  }
  SUBCASE("B=2 K=3 fixture matches the hand softmax-CE oracle") {
    torch::manual_seed(1);
    auto content = torch::randn({2, 5, 4}, torch::kFloat64);
    auto w = torch::randn({4, 3}, torch::kFloat64);
    auto labels = torch::tensor({2, 0}, torch::kInt64);
    auto loss = adversarial_loss(
        content, labels, [&](const torch::Tensor& x) { return torch::matmul(x, w); }, 0.5);

    double total = 0;
    for (int i = 0; i < 2; ++i) {
      auto pooled = to_vec(content[i].mean(0));
      std::vector<double> logits(3, 0.0);
      for (int k = 0; k < 3; ++k) {
        for (int d = 0; d < 4; ++d) logits[static_cast<std::size_t>(k)] += pooled[static_cast<std::size_t>(d)] * w[d][k].item<double>();
      }
      double m = *std::max_element(logits.begin(), logits.end());
      double denom = 0;
      for (auto l : logits) denom += std::exp(l - m);
      auto y = labels[i].item<std::int64_t>();
      total += -(logits[static_cast<std::size_t>(y)] - m - std::log(denom));
    }
    CHECK(loss.item<double>() == doctest::Approx(total / 2).epsilon(1e-10));
  }
  SUBCASE("label out of range") {
    auto content = torch::randn({1, 2, 4}, torch::kFloat64);
    auto labels = torch::tensor({7}, torch::kInt64);
    CHECK_THROWS_AS(adversarial_loss(content, labels,
                                     [](const torch::Tensor& x) {
                                       return torch::zeros({x.size(0), 3}, x.options());
                                     },
                                     1.0),
                    InputError);
  }
}

TEST_CASE("style similarity loss") {
  SUBCASE("identical vectors give zero") {
    // The epsilon guard in the denominator vanishes for well-scaled vectors.
    auto s = 10.0 * torch::randn({1, 6}, torch::kFloat64);
    CHECK(style_similarity_loss(s, s, s, 1, 1, 1).item<double>() < 1e-8);
  }
  SUBCASE("orthogonal/parallel basis case") {
    auto e1 = torch::tensor({{1.0, 0.0}}, torch::kFloat64);
    auto e2 = torch::tensor({{0.0, 1.0}}, torch::kFloat64);
    auto loss = style_similarity_loss(e1, e2, e1, 1, 1, 1);
    CHECK(loss.item<double>() == doctest::Approx(2.0).epsilon(1e-5));
  }
  SUBCASE("random vectors match the direct evaluation oracle") {
    torch::manual_seed(2);
    auto a = torch::randn({1, 9}, torch::kFloat64);
    auto m = torch::randn({1, 9}, torch::kFloat64);
    auto p = torch::randn({1, 9}, torch::kFloat64);
    auto loss = style_similarity_loss(a, m, p, 0.9, 0.4, 1.3);
    double expected = 0.9 * (1 - cosine_ref(to_vec(a), to_vec(m))) +
                      0.4 * (1 - cosine_ref(to_vec(a), to_vec(p))) +
                      1.3 * (1 - cosine_ref(to_vec(m), to_vec(p)));
    CHECK(loss.item<double>() == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("zero-norm vectors stay finite") {
    auto z = torch::zeros({1, 4}, torch::kFloat64);
    auto s = torch::randn({1, 4}, torch::kFloat64);
    auto loss = style_similarity_loss(z, s, s, 1, 1, 1);
    CHECK(std::isfinite(loss.item<double>()));
  }
  SUBCASE("invariant to positive rescaling") {
    torch::manual_seed(3);
    auto a = torch::randn({1, 7}, torch::kFloat64);
    auto m = torch::randn({1, 7}, torch::kFloat64);
    auto p = torch::randn({1, 7}, torch::kFloat64);
    auto base = style_similarity_loss(a, m, p, 1, 1, 1).item<double>();
    auto scaled = style_similarity_loss(17.0 * a, m, p, 1, 1, 1).item<double>();
    CHECK(scaled == doctest::Approx(base).epsilon(1e-5));
  }
}

TEST_CASE("adaptive average pooling bins") {
  // 5 frames to 2 bins: [0,2) and [2,5) by the floor rule.
  auto x = torch::arange(5, torch::kFloat64).unsqueeze(1);
  auto pooled = adaptive_average_pool_frames(x.unsqueeze(0), 2).squeeze(0);
  CHECK(pooled[0][0].item<double>() == doctest::Approx(0.5));
  CHECK(pooled[1][0].item<double>() == doctest::Approx(3.0));
  // Identity when sizes match.
  CHECK(torch::equal(adaptive_average_pool_frames(x.unsqueeze(0), 5), x.unsqueeze(0)));
}

TEST_CASE("orthogonality loss") {
  SUBCASE("orthonormal P gives zero") {
    auto eye = torch::eye(4, torch::kFloat64).unsqueeze(0);  // B=1, F=D=4
    auto loss = orthogonality_loss(eye, eye);
    CHECK(loss.item<double>() < 1e-8);
  }
  SUBCASE("zero P with D_c = 4 gives two") {
    auto content = torch::eye(4, torch::kFloat64).unsqueeze(0);
    auto style = torch::zeros({1, 4, 4}, torch::kFloat64);
    CHECK(orthogonality_loss(content, style).item<double>() == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("random batch matches the loop-and-sum oracle") {
    torch::manual_seed(4);
    auto content = torch::randn({2, 6, 3}, torch::kFloat64);
    auto style = torch::randn({2, 4, 5}, torch::kFloat64);
    auto loss = orthogonality_loss(content, style);

    // Oracle: pool to 4 frames by contiguous index ranges, nested loops.
    auto pool = [](const torch::Tensor& x, std::int64_t out_frames) {
      const auto frames = x.size(0);
      auto result = torch::zeros({out_frames, x.size(1)}, torch::kFloat64);
      for (std::int64_t i = 0; i < out_frames; ++i) {
        auto lo = i * frames / out_frames;
        auto hi = std::max((i + 1) * frames / out_frames, lo + 1);
        result[i] = x.slice(0, lo, hi).mean(0);
      }
      return result;
    };
    double total = 0;
    for (int b = 0; b < 2; ++b) {
      auto c = pool(content[b], 4);
      auto s = style[b];
      auto p = torch::zeros({3, 5}, torch::kFloat64);
      for (int f = 0; f < 4; ++f) {
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 5; ++j) {
            p[i][j] += c[f][i].item<double>() * s[f][j].item<double>();
          }
        }
      }
      auto gram = torch::matmul(p, p.t()) - torch::eye(3, torch::kFloat64);
      total += std::sqrt(gram.pow(2).sum().item<double>());
    }
    CHECK(loss.item<double>() == doctest::Approx(total / 2).epsilon(1e-8));
  }
}

TEST_CASE("mutual information loss") {
  SUBCASE("single element batch is exactly zero") {
    auto u = torch::randn({1, 5}, torch::kFloat64);
    auto v = torch::randn({1, 5}, torch::kFloat64);
    CHECK(mutual_info_loss(u, v, 0.3).item<double>() == 0.0);
  }
  SUBCASE("nonnegative for any input") {
    torch::manual_seed(5);
    for (int trial = 0; trial < 5; ++trial) {
      auto u = torch::randn({4, 6}, torch::kFloat64);
      auto v = torch::randn({4, 6}, torch::kFloat64);
      CHECK(mutual_info_loss(u, v, 0.7).item<double>() >= 0.0);
    }
  }
  SUBCASE("B=2 tau=1 fixture matches the direct softmax oracle") {
    torch::manual_seed(6);
    auto u = torch::randn({2, 4}, torch::kFloat64);
    auto v = torch::randn({2, 4}, torch::kFloat64);
    auto loss = mutual_info_loss(u, v, 1.0);
    double total = 0;
    for (int i = 0; i < 2; ++i) {
      double pos = cosine_ref(to_vec(u[i]), to_vec(v[i]));
      double denom = 0;
      for (int j = 0; j < 2; ++j) denom += std::exp(cosine_ref(to_vec(u[i]), to_vec(v[j])));
      total += -std::log(std::exp(pos) / denom);
    }
    CHECK(loss.item<double>() == doctest::Approx(total / 2).epsilon(1e-9));
  }
  SUBCASE("sign switch flips the objective") {
    torch::manual_seed(7);
    auto u = torch::randn({3, 4}, torch::kFloat64);
    auto v = torch::randn({3, 4}, torch::kFloat64);
    CHECK(mutual_info_loss(u, v, 0.5, -1).item<double>() ==
          doctest::Approx(-mutual_info_loss(u, v, 0.5, +1).item<double>()).epsilon(1e-12));
  }
}

namespace {

/// Literal sort-and-sum implementation of the top-k contrastive rule.
double topk_oracle(const torch::Tensor& e, std::int64_t k, double alpha_pos, double beta_neg) {
  const auto b = e.size(0);
  double total = 0;
  for (std::int64_t i = 0; i < b; ++i) {
    std::vector<std::pair<double, std::int64_t>> row;
    for (std::int64_t j = 0; j < b; ++j) row.push_back({e[i][j].item<double>(), j});
    std::sort(row.begin(), row.end(), [](auto& a, auto& c) { return a.first > c.first; });
    std::vector<std::int64_t> keep;
    for (std::int64_t j = 0; j < k; ++j) keep.push_back(row[static_cast<std::size_t>(j)].second);
    if (std::find(keep.begin(), keep.end(), i) == keep.end()) keep.back() = i;
    double denom = 0;
    for (auto j : keep) denom += std::exp(e[i][j].item<double>());
    total += -alpha_pos * std::log(std::exp(e[i][i].item<double>()) / (beta_neg * denom));
  }
  return total / static_cast<double>(b);
}

}  // namespace

TEST_CASE("top-k contrastive loss") {
  SUBCASE("k = B with unit weights reduces to symmetric InfoNCE") {
    torch::manual_seed(8);
    auto ac = torch::randn({4, 4}, torch::kFloat64);
    auto ca = torch::randn({4, 4}, torch::kFloat64);
    auto loss = topk_contrastive_loss({ac, ca}, 4, 1.0, 1.0, 0.5);
    auto infonce = [](const torch::Tensor& e) {
      return (torch::logsumexp(e, 1) - e.diagonal()).mean();
    };
    double expected = 0.5 * infonce(ac).item<double>() + 0.5 * infonce(ca).item<double>();
    CHECK(std::abs(loss.item<double>() - expected) < 1e-9);
  }
  SUBCASE("nonnegative when the diagonal is included and beta is one") {
    torch::manual_seed(9);
    for (int trial = 0; trial < 5; ++trial) {
      auto ac = torch::randn({5, 5}, torch::kFloat64);
      auto ca = torch::randn({5, 5}, torch::kFloat64);
      CHECK(topk_contrastive_loss({ac, ca}, 3, 1.0, 1.0, 0.4).item<double>() >= 0.0);
    }
  }
  SUBCASE("B=3 k=2 fixture matches the sort-and-sum oracle") {
    torch::manual_seed(10);
    auto ac = torch::randn({3, 3}, torch::kFloat64);
    auto ca = torch::randn({3, 3}, torch::kFloat64);
    const double alpha = 1.2, beta = 1.4, lambda = 0.3;
    auto loss = topk_contrastive_loss({ac, ca}, 2, alpha, beta, lambda);
    double expected =
        lambda * topk_oracle(ac, 2, alpha, beta) + (1 - lambda) * topk_oracle(ca, 2, alpha, beta);
    CHECK(loss.item<double>() == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("bad k is rejected") {
    auto e = torch::randn({3, 3}, torch::kFloat64);
    CHECK_THROWS_AS(topk_contrastive_loss({e, e}, 0, 1, 1, 0.5), ConfigError);
    CHECK_THROWS_AS(topk_contrastive_loss({e, e}, 4, 1, 1, 0.5), ConfigError);
  }
}

TEST_CASE("kl alignment loss") {
  SUBCASE("identical moments give zero") {
    torch::manual_seed(11);
    auto x = torch::randn({4, 6, 5}, torch::kFloat64);
    auto m = feature_moments(x);
    CHECK(kl_alignment_loss(m, m).item<double>() == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("unit-variance unit-mean-shift fixture gives one half") {
    Moments audio{torch::zeros({1}, torch::kFloat64), torch::ones({1}, torch::kFloat64)};
    Moments motion{torch::ones({1}, torch::kFloat64), torch::ones({1}, torch::kFloat64)};
    CHECK(kl_alignment_loss(audio, motion).item<double>() == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("nonnegative for positive variances") {
    torch::manual_seed(12);
    for (int trial = 0; trial < 8; ++trial) {
      Moments a{torch::randn({6}, torch::kFloat64),
                torch::rand({6}, torch::kFloat64) + 0.1};
      Moments c{torch::randn({6}, torch::kFloat64),
                torch::rand({6}, torch::kFloat64) + 0.1};
      CHECK(kl_alignment_loss(a, c).item<double>() >= -1e-12);
    }
  }
}

TEST_CASE("contrastive total") {
  LossWeights w;
  w.tau = 0.5;
  w.top_k = 2;
  SUBCASE("identical batches zero the KL part") {
    torch::manual_seed(13);
    auto a = torch::randn({3, 4, 6}, torch::kFloat64);
    auto total = contrastive_total(a, a, w);
    auto sims = similarity_matrices(a, a, w.tau);
    auto topk = topk_contrastive_loss(sims, 2, w.alpha_pos, w.beta_neg, w.lambda);
    CHECK(total.item<double>() == doctest::Approx(topk.item<double>()).epsilon(1e-10));
  }
  SUBCASE("decomposes into the top-k and KL parts") {
    torch::manual_seed(14);
    auto a = torch::randn({3, 4, 6}, torch::kFloat64);
    auto c = torch::randn({3, 5, 6}, torch::kFloat64);
    auto total = contrastive_total(a, c, w);
    auto sims = similarity_matrices(a, c, w.tau);
    auto part1 = topk_contrastive_loss(sims, 2, w.alpha_pos, w.beta_neg, w.lambda);
    auto part2 = kl_alignment_loss(feature_moments(a), feature_moments(c));
    CHECK(total.item<double>() ==
          doctest::Approx(part1.item<double>() + part2.item<double>()).epsilon(1e-12));
  }
  SUBCASE("similarity matrices match a per-pair cosine oracle") {
    torch::manual_seed(15);
    auto a = torch::randn({3, 4, 5}, torch::kFloat64);
    auto c = torch::randn({3, 6, 5}, torch::kFloat64);
    auto sims = similarity_matrices(a, c, 0.25);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double expected = cosine_ref(to_vec(a[i].mean(0)), to_vec(c[j].mean(0))) / 0.25;
        CHECK(sims.audio_to_content[i][j].item<double>() ==
              doctest::Approx(expected).epsilon(1e-9));
        double back = cosine_ref(to_vec(c[i].mean(0)), to_vec(a[j].mean(0))) / 0.25;
        CHECK(sims.content_to_audio[i][j].item<double>() == doctest::Approx(back).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("motion losses") {
  std::vector<std::int64_t> lips = {1};
  SUBCASE("prediction equal to ground truth zeroes everything") {
    torch::manual_seed(16);
    auto gt = torch::randn({4, 3, 3}, torch::kFloat64);
    auto terms = motion_losses({gt}, {gt}, lips, 1, 1, 0.5);
    CHECK(terms.reconstruction.item<double>() < 1e-8);
    CHECK(terms.mouth.item<double>() < 1e-8);
    CHECK(terms.velocity.item<double>() < 1e-8);
    CHECK(terms.total.item<double>() < 1e-8);
  }
  SUBCASE("constant per-frame offset cancels in the velocity term") {
    torch::manual_seed(17);
    auto gt = torch::randn({5, 3, 3}, torch::kFloat64);
    auto pred = gt + 0.25;
    auto terms = motion_losses({pred}, {gt}, lips, 1, 1, 1);
    CHECK(terms.velocity.item<double>() < 1e-8);
    CHECK(terms.reconstruction.item<double>() > 0.1);
  }
  SUBCASE("single frame single vertex pythagorean case") {
    auto gt = torch::zeros({1, 1, 3}, torch::kFloat64);
    auto pred = torch::tensor({{{3.0, 4.0, 0.0}}}, torch::kFloat64);
    auto terms = motion_losses({pred}, {gt}, {0}, 1, 1, 1);
    CHECK(terms.reconstruction.item<double>() == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(terms.mouth.item<double>() == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(terms.velocity.item<double>() == 0.0);
  }
  SUBCASE("weighted combination") {
    torch::manual_seed(18);
    auto gt = torch::randn({4, 3, 3}, torch::kFloat64);
    auto pred = torch::randn({4, 3, 3}, torch::kFloat64);
    auto terms = motion_losses({pred}, {gt}, lips, 0.7, 0.2, 0.1);
    CHECK(terms.total.item<double>() ==
          doctest::Approx(0.7 * terms.reconstruction.item<double>() +
                          0.2 * terms.mouth.item<double>() + 0.1 * terms.velocity.item<double>())
              .epsilon(1e-12));
  }
  SUBCASE("shape mismatch and empty lip mask are configuration errors") {
    auto a = torch::zeros({2, 3, 3}, torch::kFloat64);
    auto b = torch::zeros({2, 4, 3}, torch::kFloat64);
    CHECK_THROWS_AS(motion_losses({a}, {b}, lips, 1, 1, 1), ConfigError);
    CHECK_THROWS_AS(motion_losses({a}, {a}, {}, 1, 1, 1), ConfigError);
    CHECK_NOTHROW(motion_losses({a}, {a}, {}, 1, 0, 1));  // mouth weight zero is fine
  }
}

TEST_CASE("total loss") {
  torch::manual_seed(19);
  auto parts = torch::rand({5}, torch::kFloat64);
  LossWeights w;
  SUBCASE("all betas zero") {
    w.beta1 = w.beta2 = w.beta3 = w.beta4 = w.beta5 = 0;
    CHECK(total_loss(parts[0], parts[1], parts[2], parts[3], parts[4], w).item<double>() == 0.0);
  }
  SUBCASE("selector") {
    w.beta1 = 1;
    w.beta2 = w.beta3 = w.beta4 = w.beta5 = 0;
    CHECK(total_loss(parts[0], parts[1], parts[2], parts[3], parts[4], w).item<double>() ==
          doctest::Approx(parts[0].item<double>()).epsilon(1e-12));
  }
  SUBCASE("weighted sum oracle") {
    w.beta1 = 0.3;
    w.beta2 = 1.5;
    w.beta3 = 0.2;
    w.beta4 = 0.9;
    w.beta5 = 2.0;
    double expected = 0.3 * parts[0].item<double>() + 1.5 * parts[1].item<double>() +
                      0.2 * parts[2].item<double>() + 0.9 * parts[3].item<double>() +
                      2.0 * parts[4].item<double>();
    CHECK(total_loss(parts[0], parts[1], parts[2], parts[3], parts[4], w).item<double>() ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate(4));
  SUBCASE("negative weight") {
    w.beta2 = -0.1;
    CHECK_THROWS_AS(w.validate(4), ConfigError);
  }
  SUBCASE("zero temperature") {
    w.tau = 0;
    CHECK_THROWS_AS(w.validate(4), ConfigError);
  }
  SUBCASE("lambda outside the unit interval") {
    w.lambda = 1.5;
    CHECK_THROWS_AS(w.validate(4), ConfigError);
  }
  SUBCASE("default top-k rule") {
    CHECK(w.effective_top_k(8) == 4);
    CHECK(w.effective_top_k(3) == 2);
    CHECK(w.effective_top_k(2) == 2);
  }
}

TEST_CASE("losses stay finite and nonnegative on random valid inputs") {
  torch::manual_seed(20);
  LossWeights w;
  w.top_k = 2;
  for (int trial = 0; trial < 3; ++trial) {
    auto a = torch::randn({4, 6, 8}, torch::kFloat64);
    auto c = torch::randn({4, 6, 8}, torch::kFloat64);
    auto s = torch::randn({4, 8}, torch::kFloat64);
    CHECK(contrastive_total(a, c, w).item<double>() >= 0.0);
    CHECK(mutual_info_loss(s, a.mean(1), w.tau).item<double>() >= 0.0);
    CHECK(orthogonality_loss(c, a).item<double>() >= 0.0);
    CHECK(style_similarity_loss(s, s.roll(1, 0), s.roll(2, 0), 1, 1, 1).item<double>() >= 0.0);
  }
}
