#include "talkmesh/gradcheck.hpp"

#include <random>

#include "talkmesh/data.hpp"
#include "talkmesh/decoder.hpp"
#include "talkmesh/encoders.hpp"
#include "talkmesh/graph.hpp"
#include "talkmesh/losses.hpp"
#include "talkmesh/model.hpp"

namespace talkmesh {
namespace gradcheck {

CheckResult check_gradients(const std::string& name,
                            const std::function<torch::Tensor()>& fn,
                            const std::vector<torch::Tensor>& inputs,
                            const CheckOptions& options) {
  for (const auto& t : inputs) {
    if (!t.requires_grad()) t.set_requires_grad(true);
  }
  auto out = fn();
  auto analytic = torch::autograd::grad({out}, inputs, /*grad_outputs=*/{},
                                        /*retain_graph=*/false, /*create_graph=*/false,
                                        /*allow_unused=*/true);

  std::mt19937_64 rng(options.seed);
  CheckResult result;
  result.name = name;
  double worst = 0.0;
  std::int64_t coords = 0;

  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& tensor = inputs[ti];
    auto grad = analytic[ti];
    auto flat_grad = grad.defined() ? grad.reshape({-1})
                                    : torch::zeros({tensor.numel()}, tensor.options());
    const auto n = tensor.numel();
    std::vector<std::int64_t> picks;
    if (options.max_coords_per_tensor > 0 && n > options.max_coords_per_tensor) {
      std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
      for (std::int64_t i = 0; i < options.max_coords_per_tensor; ++i) picks.push_back(dist(rng));
    } else {
      picks.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) picks[static_cast<std::size_t>(i)] = i;
    }

    auto flat = tensor.reshape({-1});
    for (auto idx : picks) {
      double orig;
      {
        torch::NoGradGuard no_grad;
        orig = flat[idx].item<double>();
        flat[idx] = orig + options.eps;
      }
      double f_plus = fn().item<double>();
      {
        torch::NoGradGuard no_grad;
        flat[idx] = orig - options.eps;
      }
      double f_minus = fn().item<double>();
      {
        torch::NoGradGuard no_grad;
        flat[idx] = orig;
      }
      double fd = (f_plus - f_minus) / (2.0 * options.eps) * options.analytic_over_fd;
      double a = flat_grad[idx].item<double>() * options.corruption;
      double scale = std::max(std::abs(a), std::abs(fd));
      double ratio = std::abs(a - fd) / (options.atol + options.rtol * scale);
      worst = std::max(worst, ratio);
      ++coords;
    }
  }
  result.worst_ratio = worst;
  result.coordinates = coords;
  result.passed = worst <= 1.0;
  return result;
}

namespace {

constexpr auto kF64 = torch::kFloat64;

torch::Tensor randn(std::initializer_list<std::int64_t> shape) {
  return torch::randn(shape, torch::TensorOptions().dtype(kF64));
}

ModelConfig tiny_config(const MeshTopology& topo) {
  ModelConfig cfg;
  cfg.vertex_count = topo.vertex_count;
  cfg.num_identities = 3;
  cfg.style_dim = 8;
  cfg.audio_dim = 8;
  cfg.motion_dim = 8;
  cfg.graph_dim = 6;
  cfg.graph_layers = 2;
  cfg.frontend_dim = 6;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.ff_multiplier = 2;
  cfg.decoder_dim = 8;
  cfg.period = 4;
  cfg.alignment_slope = 0.1;
  cfg.classifier_hidden = 8;
  cfg.mel.num_bands = 6;
  cfg.mel.window_length = 128;
  cfg.mel.hop_length = 64;
  cfg.dtype = kF64;
  return cfg;
}

MeshTopology tiny_topology() {
  MeshTopology topo;
  topo.vertex_count = 6;
  topo.faces = {{0, 1, 2}, {1, 2, 3}, {2, 3, 4}, {3, 4, 5}};
  topo.edges = derive_edges(topo.faces, topo.vertex_count);
  topo.lip_mask = {true, true, false, false, false, false};
  topo.upper_face_mask = {false, false, false, false, true, true};
  return topo;
}

AudioClip tiny_clip(std::int64_t samples = 700) {
  torch::manual_seed(11);
  return {0.2 * torch::sin(torch::arange(samples, torch::kFloat64) * 0.05) +
              0.05 * torch::randn({samples}, torch::kFloat64),
          16000};
}

std::vector<torch::Tensor> named_param_tensors(const torch::nn::Module& module) {
  std::vector<torch::Tensor> out;
  for (const auto& p : module.named_parameters()) out.push_back(p.value());
  return out;
}

void add_loss_checks(std::vector<CheckResult>& results, const CheckOptions& options) {
  auto dense = options;
  dense.max_coords_per_tensor = 0;

  torch::manual_seed(3);

  {  // gradient reversal: analytic == -alpha_c * fd of the plain path
    auto x = randn({3, 4});
    auto w = randn({3, 4});
    const double alpha_c = 0.7;
    auto opts_grl = dense;
    opts_grl.analytic_over_fd = -alpha_c;
    results.push_back(check_gradients(
        "loss/grl",
        [&] { return (losses::grl(x, alpha_c) * w).sum(); }, {x}, opts_grl));
  }
  {  // adversarial loss w.r.t. classifier parameters (unreversed path)
    auto content = randn({2, 5, 6});
    auto labels = torch::tensor({0, 2}, torch::kInt64);
    auto cw = randn({6, 3});
    auto cb = randn({3});
    auto fn = [&] {
      return losses::adversarial_loss(
          content, labels,
          [&](const torch::Tensor& p) { return torch::matmul(p, cw) + cb; }, 0.8);
    };
    results.push_back(check_gradients("loss/adversarial(classifier)", fn, {cw, cb}, dense));
    // and w.r.t. content, where the reversal scales gradients by -alpha_c
    auto opts_rev = dense;
    opts_rev.analytic_over_fd = -0.8;
    results.push_back(check_gradients("loss/adversarial(content)", fn, {content}, opts_rev));
  }
  {
    auto a = randn({3, 7});
    auto m = randn({3, 7});
    auto p = randn({3, 7});
    results.push_back(check_gradients(
        "loss/style_similarity",
        [&] { return losses::style_similarity_loss(a, m, p, 1.0, 0.7, 0.3); }, {a, m, p},
        dense));
  }
  {
    auto content = randn({2, 6, 4});
    auto style = randn({2, 3, 5});
    results.push_back(check_gradients(
        "loss/orthogonality", [&] { return losses::orthogonality_loss(content, style); },
        {content, style}, dense));
  }
  {
    auto u = randn({4, 6});
    auto v = randn({4, 6});
    results.push_back(check_gradients(
        "loss/mutual_info", [&] { return losses::mutual_info_loss(u, v, 0.5); }, {u, v}, dense));
  }
  {
    auto e_ac = randn({4, 4});
    auto e_ca = randn({4, 4});
    results.push_back(check_gradients(
        "loss/topk_contrastive",
        [&] {
          return losses::topk_contrastive_loss({e_ac, e_ca}, 2, 1.2, 1.5, 0.4);
        },
        {e_ac, e_ca}, dense));
  }
  {
    auto a = randn({3, 5, 6});
    auto c = randn({3, 5, 6});
    results.push_back(check_gradients(
        "loss/kl_alignment",
        [&] {
          return losses::kl_alignment_loss(losses::feature_moments(a),
                                           losses::feature_moments(c));
        },
        {a, c}, dense));
  }
  {
    auto a = randn({3, 4, 6});
    auto c = randn({3, 4, 6});
    losses::LossWeights w;
    w.tau = 0.5;
    w.top_k = 2;
    results.push_back(check_gradients(
        "loss/contrastive_total", [&] { return losses::contrastive_total(a, c, w); }, {a, c},
        dense));
  }
  {
    auto pred1 = randn({4, 5, 3});
    auto pred2 = randn({3, 5, 3});
    auto gt1 = randn({4, 5, 3});
    auto gt2 = randn({3, 5, 3});
    std::vector<std::int64_t> lips = {0, 2};
    results.push_back(check_gradients(
        "loss/motion",
        [&] {
          return losses::motion_losses({pred1, pred2}, {gt1, gt2}, lips, 1.0, 0.8, 0.5).total;
        },
        {pred1, pred2}, dense));
  }
  {
    auto parts = randn({5});
    losses::LossWeights w;
    results.push_back(check_gradients(
        "loss/total",
        [&] {
          return losses::total_loss(parts[0], parts[1], parts[2], parts[3], parts[4], w);
        },
        {parts}, dense));
  }
}

void add_block_checks(std::vector<CheckResult>& results, const CheckOptions& options) {
  auto sampled = options;
  if (sampled.max_coords_per_tensor <= 0) sampled.max_coords_per_tensor = 24;

  auto topo = tiny_topology();
  auto cfg = tiny_config(topo);

  {
    torch::manual_seed(5);
    GatLayer layer(4, 6, kF64);
    auto states = randn({topo.vertex_count, 4});
    auto readout = randn({topo.vertex_count, 6});
    std::vector<torch::Tensor> inputs = {states, layer.weight, layer.attn_src, layer.attn_dst};
    results.push_back(check_gradients(
        "layer/gat", [&] { return (layer.forward(states, topo) * readout).sum(); }, inputs,
        sampled));
  }
  {
    torch::manual_seed(6);
    GraphEncoder enc(cfg.graph_dim, cfg.graph_layers, kF64);
    auto frames = randn({2, topo.vertex_count, 3});
    auto inputs = named_param_tensors(enc);
    inputs.push_back(frames);
    results.push_back(check_gradients(
        "encoder/graph", [&] { return enc.forward(frames, topo).sin().sum(); }, inputs,
        sampled));
  }
  {
    torch::manual_seed(7);
    AudioContentEncoder enc(cfg);
    auto clip = tiny_clip();
    results.push_back(check_gradients(
        "encoder/audio_content", [&] { return enc.forward(clip, 4).sin().sum(); },
        named_param_tensors(enc), sampled));
  }
  {
    torch::manual_seed(8);
    AudioStyleEncoder enc(cfg);
    auto clip = tiny_clip();
    results.push_back(check_gradients(
        "encoder/audio_style", [&] { return enc.forward(clip).code.vector.sin().sum(); },
        named_param_tensors(enc), sampled));
  }
  {
    torch::manual_seed(9);
    MotionStyleEncoder enc(cfg);
    auto g = randn({1, 6, topo.vertex_count, cfg.graph_dim});
    auto inputs = named_param_tensors(enc);
    inputs.push_back(g);
    results.push_back(check_gradients(
        "encoder/motion_style", [&] { return enc.forward(g).code.vector.sin().sum(); }, inputs,
        sampled));
  }
  {
    torch::manual_seed(10);
    MotionContentEncoder enc(cfg);
    auto g = randn({1, 5, topo.vertex_count, cfg.graph_dim});
    auto inputs = named_param_tensors(enc);
    inputs.push_back(g);
    results.push_back(check_gradients(
        "encoder/motion_content", [&] { return enc.forward(g).sin().sum(); }, inputs, sampled));
  }
  {
    torch::manual_seed(12);
    IdentityEncoder enc(cfg);
    std::vector<IdentityLabel> labels = {{1, cfg.num_identities}, {2, cfg.num_identities}};
    results.push_back(check_gradients(
        "encoder/identity", [&] { return enc.forward(labels).vector.sin().sum(); },
        named_param_tensors(enc), sampled));
  }
  {
    torch::manual_seed(13);
    MotionDecoder dec(cfg);
    {  // the zero-initialized head needs nonzero values for a meaningful check
      torch::NoGradGuard no_grad;
      for (const auto& p : dec.named_parameters()) {
        if (p.key().rfind("out_proj", 0) == 0 && p.value().dim() == 2) {
          p.value().uniform_(-0.05, 0.05);
        }
      }
    }
    auto gt = randn({1, 2, topo.vertex_count, 3});
    auto audio = randn({1, 2, cfg.audio_dim});
    auto content = randn({1, 2, cfg.motion_dim});
    auto style = randn({1, cfg.style_dim});
    auto tmpl = randn({1, topo.vertex_count, 3});
    auto inputs = named_param_tensors(dec);
    inputs.push_back(audio);
    inputs.push_back(content);
    inputs.push_back(style);
    results.push_back(check_gradients(
        "decoder/step",
        [&] { return dec.decode_teacher_forced(gt, audio, content, style, tmpl).sin().sum(); },
        inputs, sampled));
  }
}

}  // namespace

std::vector<CheckResult> run_all(const CheckOptions& options) {
  std::vector<CheckResult> results;
  add_loss_checks(results, options);
  add_block_checks(results, options);
  return results;
}

bool negative_control(const CheckOptions& options) {
  torch::manual_seed(21);
  auto x = randn({4, 4});
  auto w = randn({4, 4});
  auto corrupted = options;
  corrupted.corruption = 1.05;
  auto result = check_gradients(
      "negative_control", [&] { return (x.pow(2) * w).sum(); }, {x}, corrupted);
  return !result.passed;
}

}  // namespace gradcheck
}  // namespace talkmesh
