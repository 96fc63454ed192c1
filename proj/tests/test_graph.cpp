#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "talkmesh/gradcheck.hpp"
#include "talkmesh/graph.hpp"

using namespace talkmesh;

namespace {

MeshTopology path_graph(std::int64_t n) {
  MeshTopology topo;
  topo.vertex_count = n;
  for (std::int64_t i = 0; i + 1 < n; ++i) topo.edges.push_back({i, i + 1});
  return topo;
}

double leaky(double x) { return x >= 0 ? x : 0.2 * x; }

/// Direct per-node evaluation of the attention aggregation rule with plain
/// loops, independent of the tensor implementation.
torch::Tensor gat_oracle(const torch::Tensor& states, const MeshTopology& topo,
                         const torch::Tensor& w, const torch::Tensor& a_src,
                         const torch::Tensor& a_dst) {
  const auto n = topo.vertex_count;
  const auto d_out = w.size(1);
  auto z = torch::matmul(states, w);
  std::vector<std::vector<std::int64_t>> neighbors(n);
  for (const auto& [a, b] : topo.edges) {
    neighbors[a].push_back(b);
    neighbors[b].push_back(a);
  }
  for (std::int64_t v = 0; v < n; ++v) neighbors[v].push_back(v);  // self loop

  auto out = torch::zeros({n, d_out}, states.options());
  for (std::int64_t v = 0; v < n; ++v) {
    std::vector<double> logits;
    double dst_score = torch::dot(z[v], a_dst).item<double>();
    for (auto u : neighbors[v]) {
      logits.push_back(leaky(torch::dot(z[u], a_src).item<double>() + dst_score));
    }
    double m = *std::max_element(logits.begin(), logits.end());
    double denom = 0;
    for (auto l : logits) denom += std::exp(l - m);
    for (std::size_t k = 0; k < neighbors[v].size(); ++k) {
      double alpha = std::exp(logits[k] - m) / denom;
      out[v] += alpha * z[neighbors[v][k]];
    }
    for (std::int64_t j = 0; j < d_out; ++j) {
      out[v][j] = leaky(out[v][j].item<double>());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("single node with self loop: attention weight one") {
  torch::manual_seed(0);
  MeshTopology topo;
  topo.vertex_count = 1;
  GatLayer layer(3, 4, torch::kFloat64);
  auto h = torch::randn({1, 3}, torch::kFloat64);
  auto [out, alpha] = layer.forward_with_attention(h, topo);
  CHECK(alpha.numel() == 1);
  CHECK(alpha.item<double>() == doctest::Approx(1.0).epsilon(1e-12));
  auto expected = torch::leaky_relu(torch::matmul(h, layer.weight), 0.2);
  CHECK(torch::allclose(out, expected, 1e-12, 1e-12));
}

TEST_CASE("attention weights sum to one per node") {
  torch::manual_seed(1);
  auto topo = path_graph(6);
  topo.edges.push_back({0, 3});
  GatLayer layer(5, 5, torch::kFloat64);
  auto h = torch::randn({6, 5}, torch::kFloat64);
  auto [out, alpha] = layer.forward_with_attention(h, topo);
  auto dst = attention_index_tensors(topo).second;
  auto sums = torch::zeros({6}, torch::kFloat64).index_add_(0, dst, alpha);
  CHECK(torch::allclose(sums, torch::ones({6}, torch::kFloat64), 1e-6, 1e-6));
}

TEST_CASE("three-node path matches the direct evaluation oracle") {
  torch::manual_seed(2);
  auto topo = path_graph(3);
  GatLayer layer(2, 3, torch::kFloat64);
  auto h = torch::tensor({{0.3, -0.7}, {1.1, 0.2}, {-0.4, 0.9}}, torch::kFloat64);
  auto out = layer.forward(h, topo);
  auto expected = gat_oracle(h, topo, layer.weight, layer.attn_src, layer.attn_dst);
  CHECK(torch::allclose(out, expected, 1e-10, 1e-10));
}

TEST_CASE("gat layer rejects NaN input") {
  auto topo = path_graph(2);
  GatLayer layer(2, 2, torch::kFloat64);
  auto h = torch::full({2, 2}, std::numeric_limits<double>::quiet_NaN(), torch::kFloat64);
  CHECK_THROWS_AS(layer.forward(h, topo), NumericError);
}

TEST_CASE("gat layer rejects mismatched shapes") {
  auto topo = path_graph(3);
  GatLayer layer(2, 2, torch::kFloat64);
  CHECK_THROWS_AS(layer.forward(torch::zeros({3, 5}, torch::kFloat64), topo), ConfigError);
  CHECK_THROWS_AS(layer.forward(torch::zeros({4, 2}, torch::kFloat64), topo), ConfigError);
}

TEST_CASE("encoder applies layers independently per frame") {
  torch::manual_seed(3);
  auto topo = path_graph(4);
  GraphEncoder enc(6, 2, torch::kFloat64);
  auto frames = torch::randn({3, 4, 3}, torch::kFloat64);
  auto base = enc.forward(frames, topo);

  SUBCASE("perturbing one frame leaves the others bit-identical") {
    auto perturbed = frames.clone();
    perturbed[1] += 0.5;
    auto out = enc.forward(perturbed, topo);
    CHECK(torch::equal(out[0], base[0]));
    CHECK(torch::equal(out[2], base[2]));
    CHECK(!torch::equal(out[1], base[1]));
  }

  SUBCASE("matches the frame-loop oracle") {
    for (std::int64_t t = 0; t < 3; ++t) {
      auto single = enc.forward(frames[t], topo);
      CHECK(torch::allclose(single, base[t], 1e-12, 1e-12));
    }
  }
}

TEST_CASE("two-frame grid matches a per-frame layer-loop oracle") {
  torch::manual_seed(4);
  MeshTopology topo;
  topo.vertex_count = 4;
  topo.faces = {{0, 1, 2}, {1, 2, 3}};
  topo.edges = derive_edges(topo.faces, 4);
  GraphEncoder enc(5, 2, torch::kFloat64);
  auto frames = torch::randn({2, 4, 3}, torch::kFloat64);
  auto out = enc.forward(frames, topo);
  CHECK(out.sizes() == torch::IntArrayRef({2, 4, 5}));

  // Oracle: loop gat_layer per frame through the same parameters.
  GatLayer first(3, 5, torch::kFloat64), second(5, 5, torch::kFloat64);
  {
    torch::NoGradGuard no_grad;
    auto params = enc.named_parameters();
    first.weight.copy_(*params.find("layer0.weight"));
    first.attn_src.copy_(*params.find("layer0.attn_src"));
    first.attn_dst.copy_(*params.find("layer0.attn_dst"));
    second.weight.copy_(*params.find("layer1.weight"));
    second.attn_src.copy_(*params.find("layer1.attn_src"));
    second.attn_dst.copy_(*params.find("layer1.attn_dst"));
  }
  for (std::int64_t t = 0; t < 2; ++t) {
    auto expected = second.forward(first.forward(frames[t], topo), topo);
    CHECK(torch::allclose(out[t], expected, 1e-12, 1e-12));
  }
}

TEST_CASE("gradients of a scalar readout match finite differences") {
  torch::manual_seed(5);
  auto topo = path_graph(4);
  topo.edges.push_back({0, 2});
  GatLayer layer(3, 4, torch::kFloat64);
  auto states = torch::randn({4, 3}, torch::kFloat64);
  auto readout = torch::randn({4, 4}, torch::kFloat64);
  auto result = gradcheck::check_gradients(
      "gat",
      [&] { return (layer.forward(states, topo) * readout).sum(); },
      {states, layer.weight, layer.attn_src, layer.attn_dst});
  CHECK(result.passed);
}

TEST_CASE("no dense vertex-square allocation: large sparse graph stays fast") {
  // 20k vertices in a long path; a dense attention matrix would need 3.2 GB.
  auto topo = path_graph(20000);
  GatLayer layer(3, 4, torch::kFloat32);
  auto h = torch::randn({20000, 3}, torch::kFloat32);
  auto out = layer.forward(h, topo);
  CHECK(out.sizes() == torch::IntArrayRef({20000, 4}));
  CHECK(torch::isfinite(out).all().item<bool>());
}
