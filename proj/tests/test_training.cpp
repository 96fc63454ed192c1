#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "talkmesh/data.hpp"
#include "talkmesh/training.hpp"

using namespace talkmesh;
using namespace talkmesh::training;
namespace fs = std::filesystem;

namespace {

// One shared tiny corpus for every training test.
const std::string& corpus_dir() {
  static std::string dir = [] {
    auto d = fs::temp_directory_path() / "talkmesh_training_tests" / "corpus";
    fs::remove_all(d);
    data::generate_corpus(d.string(), 12, 12, 5, data::default_style_palette());
    return d.string();
  }();
  return dir;
}

ModelConfig tiny_model_config(const data::Corpus& corpus) {
  ModelConfig cfg;
  cfg.vertex_count = corpus.topology().vertex_count;
  cfg.num_identities = corpus.num_identities();
  cfg.style_dim = 8;
  cfg.audio_dim = 8;
  cfg.motion_dim = 8;
  cfg.graph_dim = 4;
  cfg.graph_layers = 1;
  cfg.frontend_dim = 8;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.decoder_dim = 8;
  cfg.classifier_hidden = 8;
  cfg.mel.num_bands = 8;
  cfg.mel.window_length = 200;
  cfg.mel.hop_length = 100;
  return cfg;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.stage1_steps = 4;
  cfg.stage2_steps = 4;
  cfg.batch_size = 4;
  cfg.seed = 11;
  cfg.log_every = 1;
  return cfg;
}

torch::Tensor snapshot(const Model& model, const std::vector<std::string>& names) {
  std::vector<torch::Tensor> parts;
  auto params = model.named_parameters();
  for (const auto& n : names) parts.push_back(params.find(n)->reshape({-1}).clone());
  return torch::cat(parts);
}

}  // namespace

TEST_CASE("grl schedule") {
  CHECK(grl_schedule(0, 100, 1.0) == 0.0);
  CHECK(grl_schedule(20, 100, 1.0) == doctest::Approx(1.0));
  CHECK(grl_schedule(50, 100, 1.0) == 1.0);
  CHECK(grl_schedule(10, 100, 1.0) == doctest::Approx(0.5));
  CHECK(grl_schedule(10, 100, 0.8) == doctest::Approx(0.4));
  CHECK(grl_schedule(5, 100, 1.0, 0.0) == 1.0);
}

TEST_CASE("checkpoint io round trip is exact") {
  Checkpoint ckpt;
  torch::manual_seed(0);
  ckpt.entries.emplace_back("param/a", torch::randn({3, 4}, torch::kFloat32));
  ckpt.entries.emplace_back("param/b", torch::randn({5}, torch::kFloat32));
  ckpt.entries.emplace_back("opt/m/a", torch::randn({3, 4}, torch::kFloat32));
  ckpt.step = 42;
  ckpt.config_hash = 0xdeadbeefULL;
  auto path = (fs::temp_directory_path() / "talkmesh_ckpt_test.ptkc").string();
  save_checkpoint(ckpt, path);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.step == 42);
  CHECK(loaded.config_hash == 0xdeadbeefULL);
  REQUIRE(loaded.entries.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded.entries[i].first == ckpt.entries[i].first);
    CHECK(torch::equal(loaded.entries[i].second, ckpt.entries[i].second));
  }
}

TEST_CASE("checkpoint header carries the PTKC magic") {
  Checkpoint ckpt;
  ckpt.entries.emplace_back("param/x", torch::zeros({2}, torch::kFloat32));
  auto path = (fs::temp_directory_path() / "talkmesh_magic.ptkc").string();
  save_checkpoint(ckpt, path);
  std::ifstream is(path, std::ios::binary);
  char head[4];
  is.read(head, 4);
  CHECK(std::string(head, 4) == "PTKC");
}

TEST_CASE("invalid train config fails before any step") {
  data::Corpus corpus(corpus_dir() + "/manifest.json");
  torch::manual_seed(1);
  Model model(tiny_model_config(corpus), corpus.topology());
  auto cfg = tiny_train_config();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(Trainer(model, cfg, corpus), ConfigError);
  cfg = tiny_train_config();
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(Trainer(model, cfg, corpus), ConfigError);
  cfg = tiny_train_config();
  cfg.weights.tau = -1;
  CHECK_THROWS_AS(Trainer(model, cfg, corpus), ConfigError);
}

TEST_CASE("stage 1 freezes the style encoders bit-exactly, stage 2 unfreezes") {
  data::Corpus corpus(corpus_dir() + "/manifest.json");
  torch::manual_seed(2);
  Model model(tiny_model_config(corpus), corpus.topology());
  auto style_names = model.style_parameter_names();
  REQUIRE(!style_names.empty());

  std::vector<std::string> other_names;
  for (const auto& p : model.named_parameters()) {
    const auto& name = p.key();
    if (std::find(style_names.begin(), style_names.end(), name) == style_names.end()) {
      other_names.push_back(name);
    }
  }

  auto cfg = tiny_train_config();
  Trainer trainer(model, cfg, corpus);
  auto style_before = snapshot(model, style_names);
  auto other_before = snapshot(model, other_names);
  trainer.run_until(cfg.stage1_steps);
  auto style_after_stage1 = snapshot(model, style_names);
  CHECK(torch::equal(style_before, style_after_stage1));
  CHECK(!torch::equal(other_before, snapshot(model, other_names)));

  trainer.run_until(cfg.total_steps());
  auto style_after_stage2 = snapshot(model, style_names);
  CHECK(!torch::equal(style_after_stage1, style_after_stage2));
}

TEST_CASE("identical seed and config give identical losses") {
  data::Corpus corpus(corpus_dir() + "/manifest.json");
  auto run = [&](std::uint64_t seed) {
    torch::manual_seed(seed);
    Model model(tiny_model_config(corpus), corpus.topology());
    auto cfg = tiny_train_config();
    cfg.stage1_steps = 5;
    cfg.stage2_steps = 5;
    Trainer trainer(model, cfg, corpus);
    std::vector<double> losses;
    trainer.run_until(cfg.total_steps(),
                      [&](const StepLog& log) { losses.push_back(log.total); });
    return losses;
  };
  auto a = run(3);
  auto b = run(3);
  auto c = run(4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK(a != c);
}

TEST_CASE("resume from checkpoint reproduces the uninterrupted trajectory") {
  data::Corpus corpus(corpus_dir() + "/manifest.json");
  auto cfg = tiny_train_config();
  cfg.stage1_steps = 3;
  cfg.stage2_steps = 5;

  // Uninterrupted run.
  torch::manual_seed(7);
  Model reference(tiny_model_config(corpus), corpus.topology());
  Trainer ref_trainer(reference, cfg, corpus, 123);
  std::vector<double> ref_losses;
  ref_trainer.run_until(cfg.total_steps(),
                        [&](const StepLog& log) { ref_losses.push_back(log.total); });

  // Interrupted at step 4 (mid stage 2), saved, restored into a fresh model.
  torch::manual_seed(7);
  Model first(tiny_model_config(corpus), corpus.topology());
  Trainer first_trainer(first, cfg, corpus, 123);
  first_trainer.run_until(4);
  auto path = (fs::temp_directory_path() / "talkmesh_resume.ptkc").string();
  save_checkpoint(first_trainer.capture(), path);

  torch::manual_seed(99);  // different init; restore must overwrite everything
  Model second(tiny_model_config(corpus), corpus.topology());
  Trainer second_trainer(second, cfg, corpus, 123);
  second_trainer.restore(load_checkpoint(path));
  CHECK(second_trainer.current_step() == 4);
  std::vector<double> resumed;
  second_trainer.run_until(cfg.total_steps(),
                           [&](const StepLog& log) { resumed.push_back(log.total); });

  REQUIRE(ref_losses.size() == 8);
  REQUIRE(resumed.size() == 4);
  for (std::size_t i = 0; i < resumed.size(); ++i) {
    CHECK(std::abs(resumed[i] - ref_losses[4 + i]) < 1e-7);
  }
}

TEST_CASE("checkpoint with a different config hash is rejected") {
  data::Corpus corpus(corpus_dir() + "/manifest.json");
  torch::manual_seed(8);
  Model model(tiny_model_config(corpus), corpus.topology());
  auto cfg = tiny_train_config();
  Trainer trainer(model, cfg, corpus, 111);
  auto ckpt = trainer.capture();
  ckpt.config_hash = 222;
  CHECK_THROWS_AS(trainer.restore(ckpt), ConfigError);
}

TEST_CASE("ablation flag changes exactly its own term") {
  data::Corpus corpus(corpus_dir() + "/manifest.json");
  torch::manual_seed(9);
  Model model(tiny_model_config(corpus), corpus.topology());
  auto cfg = tiny_train_config();

  Trainer trainer(model, cfg, corpus);
  auto batch_ids = trainer.batch_indices(0);

  // Build the same batch through a second trainer pass: use training_forward
  // directly with both flag settings on identical parameters.
  std::vector<data::TrainingExample> examples;
  for (auto i : corpus.split_indices("train")) examples.push_back(corpus.load(i));
  Batch batch;
  std::vector<torch::Tensor> motions, templates;
  std::vector<std::int64_t> labels;
  for (auto i : batch_ids) {
    const auto& ex = examples.at(i);
    batch.clips.push_back(ex.audio);
    motions.push_back(ex.motion.frames.to(torch::kFloat32));
    templates.push_back(ex.template_verts.to(torch::kFloat32));
    labels.push_back(ex.identity.index);
  }
  batch.motion = torch::stack(motions);
  batch.templates = torch::stack(templates);
  batch.labels = torch::tensor(labels, torch::kInt64);

  AblationFlags on;
  AblationFlags off = on;
  off.contrastive = false;
  auto with_cts = model.training_forward(batch, cfg.weights, 0.5, on);
  auto without_cts = model.training_forward(batch, cfg.weights, 0.5, off);
  auto expected_diff = cfg.weights.beta5 * with_cts.contrastive.item<double>();
  CHECK(with_cts.total.item<double>() - without_cts.total.item<double>() ==
        doctest::Approx(expected_diff).epsilon(1e-6));
  CHECK(without_cts.contrastive.item<double>() == 0.0);

  // The other terms are untouched by the flag.
  CHECK(with_cts.adversarial.item<double>() == without_cts.adversarial.item<double>());
  CHECK(with_cts.orthogonality.item<double>() == without_cts.orthogonality.item<double>());
  CHECK(with_cts.motion_terms.total.item<double>() ==
        without_cts.motion_terms.total.item<double>());
}

TEST_CASE("adam updates only parameters with gradients") {
  auto a = torch::ones({3}, torch::TensorOptions().dtype(torch::kFloat32).requires_grad(true));
  auto b = torch::ones({3}, torch::TensorOptions().dtype(torch::kFloat32).requires_grad(false));
  Adam opt({{"a", a}, {"b", b}}, 0.1);
  auto loss = (a * 2.0).sum();
  loss.backward();
  opt.step();
  CHECK(!torch::equal(a, torch::ones({3})));
  CHECK(torch::equal(b, torch::ones({3})));
}

TEST_CASE("fnv1a hash is stable and discriminating") {
  CHECK(fnv1a_hash("abc") == fnv1a_hash("abc"));
  CHECK(fnv1a_hash("abc") != fnv1a_hash("abd"));
}
