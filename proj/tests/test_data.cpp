#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "talkmesh/data.hpp"

using namespace talkmesh;
using namespace talkmesh::data;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "talkmesh_data_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double peak_lip_displacement(const MotionSequence& seq, const MeshTopology& topo,
                             const torch::Tensor& tmpl) {
  auto lips = torch::tensor(topo.lip_indices(), torch::kInt64);
  auto disp = (seq.frames.to(torch::kFloat64).index_select(1, lips) -
               tmpl.index_select(0, lips).unsqueeze(0));
  // Planted opening moves lips along -y; protrusion is constant +z.
  return (-disp.select(-1, 1)).max().item<double>();
}

}  // namespace

TEST_CASE("synthetic topology is a valid masked grid") {
  auto topo = make_synthetic_topology();
  CHECK_NOTHROW(topo.validate());
  CHECK(topo.vertex_count == 120);
  CHECK(!topo.lip_indices().empty());
  CHECK(!topo.upper_face_indices().empty());
}

TEST_CASE("phoneme inventory has 12 units with distinct formant pairs") {
  const auto& inv = phoneme_inventory();
  CHECK(inv.size() == 12);
  for (std::size_t i = 0; i < inv.size(); ++i) {
    for (std::size_t j = i + 1; j < inv.size(); ++j) {
      CHECK((inv[i].f1 != inv[j].f1 || inv[i].f2 != inv[j].f2));
    }
  }
}

TEST_CASE("synthetic pair determinism") {
  auto topo = make_synthetic_topology();
  SyntheticStyleSpec style;
  style.style_id = 2;
  auto a = generate_synthetic_pair(42, style, 20, topo, 8);
  auto b = generate_synthetic_pair(42, style, 20, topo, 8);
  CHECK(torch::equal(a.audio.samples, b.audio.samples));
  CHECK(torch::equal(a.motion.frames, b.motion.frames));

  auto c = generate_synthetic_pair(43, style, 20, topo, 8);
  CHECK(!torch::equal(a.motion.frames, c.motion.frames));
}

TEST_CASE("same content seed, two styles: identical timing, scaled amplitude") {
  auto topo = make_synthetic_topology();
  SyntheticStyleSpec narrow{1, 1.0, 0.0, 1.0};
  SyntheticStyleSpec wide{5, 2.0, 0.0, 1.0};  // sharpness 1: no smoothing
  auto a = generate_synthetic_pair(7, narrow, 40, topo, 8);
  auto b = generate_synthetic_pair(7, wide, 40, topo, 8);

  // Identical phoneme timing: the unsmoothed opening curves are proportional.
  REQUIRE(a.raw_opening.size() == b.raw_opening.size());
  for (std::size_t t = 0; t < a.raw_opening.size(); ++t) {
    CHECK(a.raw_opening[t] == doctest::Approx(b.raw_opening[t]).epsilon(1e-12));
  }

  auto tmpl = synthetic_template(topo);
  double peak_a = peak_lip_displacement(a.motion, topo, tmpl);
  double peak_b = peak_lip_displacement(b.motion, topo, tmpl);
  CHECK(peak_b / peak_a == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("style spec validation") {
  SyntheticStyleSpec s;
  s.mouth_amplitude = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.mouth_amplitude = 1.0;
  s.articulation_sharpness = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.articulation_sharpness = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("protrusion is a constant outward lip offset") {
  auto topo = make_synthetic_topology();
  SyntheticStyleSpec flat{0, 1.0, 0.0, 1.0};
  SyntheticStyleSpec pouty{0, 1.0, 2.5, 1.0};
  auto a = generate_synthetic_pair(3, flat, 10, topo, 8);
  auto b = generate_synthetic_pair(3, pouty, 10, topo, 8);
  auto lips = torch::tensor(topo.lip_indices(), torch::kInt64);
  auto dz = (b.motion.frames - a.motion.frames).index_select(1, lips).select(-1, 2);
  CHECK(torch::allclose(dz.to(torch::kFloat64),
                        torch::full_like(dz.to(torch::kFloat64), 2.5), 1e-5, 1e-5));
}

TEST_CASE("corpus generation, loading and round trip") {
  auto dir = fresh_dir("corpus");
  auto summary = generate_corpus(dir.string(), 12, 16, 99, default_style_palette());
  CHECK(summary.sequences == 12);
  CHECK(summary.identities == 8);
  CHECK(summary.train + summary.val + summary.test == 12);

  Corpus corpus((dir / "manifest.json").string());
  CHECK(corpus.size() == 12);
  CHECK(corpus.num_identities() == 8);

  SUBCASE("loaded example matches the generator output bit-exactly") {
    auto ex = corpus.load(0);
    const auto& palette = default_style_palette();
    auto pair = generate_synthetic_pair(99 * 1000003ULL + 0, palette[0], 16, corpus.topology(),
                                        8);
    CHECK(torch::equal(ex.motion.frames, pair.motion.frames));
    // Audio passes through 16-bit quantization on disk.
    CHECK((ex.audio.samples.to(torch::kFloat64) - pair.audio.samples.to(torch::kFloat64))
              .abs()
              .max()
              .item<double>() < 1.0 / 32000.0);
    CHECK(ex.identity.index == 0);
  }

  SUBCASE("split indices partition the corpus") {
    auto train = corpus.split_indices("train");
    auto val = corpus.split_indices("val");
    auto test = corpus.split_indices("test");
    CHECK(train.size() + val.size() + test.size() == corpus.size());
  }
}

TEST_CASE("empty manifest loads as an empty corpus") {
  auto dir = fresh_dir("empty");
  auto topo = make_synthetic_topology();
  save_topology(topo, (dir / "topology.json").string());
  CorpusManifest manifest;
  manifest.topology_path = "topology.json";
  save_manifest(manifest, (dir / "manifest.json").string());
  Corpus corpus((dir / "manifest.json").string());
  CHECK(corpus.size() == 0);
}

TEST_CASE("vertex count mismatch names the offending file") {
  auto dir = fresh_dir("mismatch");
  generate_corpus(dir.string(), 2, 8, 1, default_style_palette());
  // Overwrite one mesh with the wrong vertex count.
  MotionSequence bad;
  bad.frames = torch::zeros({8, 7, 3}, torch::kFloat32);
  write_mesh_sequence(bad, (dir / "mesh/seq_00001.ptkm").string());
  Corpus corpus((dir / "manifest.json").string());
  try {
    corpus.load(1);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("seq_00001.ptkm") != std::string::npos);
  }
}

TEST_CASE("missing files are distinct io errors") {
  auto dir = fresh_dir("missing");
  generate_corpus(dir.string(), 2, 8, 1, default_style_palette());
  fs::remove(dir / "audio/seq_00000.wav");
  CHECK_THROWS_AS(Corpus((dir / "manifest.json").string()), IoError);
}

TEST_CASE("corrupt mesh header is an io error") {
  auto dir = fresh_dir("corrupt");
  generate_corpus(dir.string(), 2, 8, 1, default_style_palette());
  {
    std::ofstream os(dir / "mesh/seq_00000.ptkm", std::ios::binary);
    os << "garbage";
  }
  Corpus corpus((dir / "manifest.json").string());
  CHECK_THROWS_AS(corpus.load(0), IoError);
}

TEST_CASE("planted amplitude is linearly recoverable (R^2 > 0.99)") {
  auto topo = make_synthetic_topology();
  auto tmpl = synthetic_template(topo);
  std::vector<double> amplitude, peak;
  for (int i = 0; i < 100; ++i) {
    SyntheticStyleSpec style;
    style.style_id = i % 8;
    style.mouth_amplitude = 0.5 + 0.02 * i;
    style.articulation_sharpness = 0.6;  // smoothing must not break recoverability
    auto pair = generate_synthetic_pair(1000, style, 24, topo, 8);
    amplitude.push_back(style.mouth_amplitude);
    peak.push_back(peak_lip_displacement(pair.motion, topo, tmpl));
  }
  // Simple least squares of peak on amplitude.
  const auto n = static_cast<double>(amplitude.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < amplitude.size(); ++i) {
    sx += amplitude[i];
    sy += peak[i];
    sxx += amplitude[i] * amplitude[i];
    sxy += amplitude[i] * peak[i];
    syy += peak[i] * peak[i];
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  double intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < amplitude.size(); ++i) {
    double fit = slope * amplitude[i] + intercept;
    ss_res += (peak[i] - fit) * (peak[i] - fit);
    ss_tot += (peak[i] - sy / n) * (peak[i] - sy / n);
  }
  double r2 = 1.0 - ss_res / ss_tot;
  CHECK(r2 > 0.99);
}
