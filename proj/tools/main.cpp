#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "talkmesh/config.hpp"
#include "talkmesh/data.hpp"
#include "talkmesh/evaluation.hpp"
#include "talkmesh/gradcheck.hpp"
#include "talkmesh/model.hpp"
#include "talkmesh/training.hpp"

namespace fs = std::filesystem;
using namespace talkmesh;

namespace {

struct CommonArgs {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::vector<std::string> disable;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Configuration file (JSON)");
  cmd->add_option("--seed", args.seed, "Master seed (corpus and training)");
  cmd->add_option("--set", args.overrides, "Override a config value, key=value (repeatable)");
  cmd->add_flag_callback("--disable-adv", [&] { args.disable.push_back("adversarial"); },
                         "Drop the adversarial loss");
  cmd->add_flag_callback("--disable-cos", [&] { args.disable.push_back("style_similarity"); },
                         "Drop the style similarity loss");
  cmd->add_flag_callback("--disable-orth", [&] { args.disable.push_back("orthogonality"); },
                         "Drop the orthogonality loss");
  cmd->add_flag_callback("--disable-info", [&] { args.disable.push_back("mutual_info"); },
                         "Drop the mutual information loss");
  cmd->add_flag_callback("--disable-cts", [&] { args.disable.push_back("contrastive"); },
                         "Drop the contrastive loss");
  cmd->add_flag_callback("--disable-e-g", [&] { args.disable.push_back("graph_encoder"); },
                         "Bypass graph attention (self-loop-only aggregation)");
  cmd->add_flag_callback("--disable-audio-disent",
                         [&] { args.disable.push_back("audio_disentanglement"); },
                         "Drop audio-side disentanglement constraints");
  cmd->add_flag_callback("--disable-motion-disent",
                         [&] { args.disable.push_back("motion_disentanglement"); },
                         "Drop motion-side disentanglement constraints");
}

std::pair<GlobalConfig, std::string> resolve_config(const CommonArgs& args) {
  auto overrides = args.overrides;
  if (args.seed) {
    overrides.push_back("train.seed=" + std::to_string(*args.seed));
    overrides.push_back("data.seed=" + std::to_string(*args.seed));
  }
  for (const auto& flag : args.disable) {
    overrides.push_back("train.ablations." + flag + "=false");
  }
  auto loaded = load_config(args.config_path, overrides);
  loaded.first.train.validate();
  return loaded;
}

ModelConfig make_model_config(const GlobalConfig& config, const data::Corpus& corpus) {
  auto mc = config.model;
  mc.vertex_count = corpus.topology().vertex_count;
  mc.num_identities = corpus.num_identities();
  return mc;
}

int cmd_synth_data(const CommonArgs& args) {
  auto [config, text] = resolve_config(args);
  (void)text;
  auto dir = fs::path(config.paths.manifest).parent_path().string();
  if (dir.empty()) dir = ".";
  auto summary = data::generate_corpus(dir, config.data.sequences, config.data.frames,
                                       config.data.seed, data::default_style_palette(),
                                       config.data.fps);
  std::cout << "corpus written to " << dir << "\n"
            << "sequences " << summary.sequences << " (train " << summary.train << ", val "
            << summary.val << ", test " << summary.test << ")\n"
            << "identities " << summary.identities << "\n"
            << "total frames " << summary.total_frames << "\n";
  return kExitOk;
}

int cmd_train(const CommonArgs& args, const std::optional<std::string>& resume) {
  auto [config, text] = resolve_config(args);
  auto hash = training::fnv1a_hash(text);
  torch::manual_seed(config.train.seed);

  data::Corpus corpus(config.paths.manifest);
  Model model(make_model_config(config, corpus), corpus.topology());

  fs::create_directories(config.paths.checkpoint_dir);
  auto log_path = fs::path(config.paths.checkpoint_dir) / "train_log.txt";
  std::ofstream log(log_path, std::ios::app);
  log << "# config " << text << "\n";
  log << "# ablations " << config.to_json()["train"]["ablations"].dump() << "\n";
  log << "# " << training::StepLog::header() << "\n";
  auto on_log = [&](const training::StepLog& entry) {
    log << entry.line() << "\n";
    log.flush();
    std::cout << entry.line() << "\n";
  };

  training::Trainer trainer(model, config.train, corpus, hash);
  if (resume) {
    trainer.restore(training::load_checkpoint(*resume));
    std::cout << "resumed from " << *resume << " at step " << trainer.current_step() << "\n";
  }
  if (trainer.current_step() < config.train.stage1_steps) {
    trainer.run_until(config.train.stage1_steps, on_log);
    training::save_checkpoint(trainer.capture(),
                              (fs::path(config.paths.checkpoint_dir) / "stage1.ptkc").string());
  }
  trainer.run_until(config.train.total_steps(), on_log);
  auto final_path = fs::path(config.paths.checkpoint_dir) / "final.ptkc";
  training::save_checkpoint(trainer.capture(), final_path.string());
  std::cout << "final checkpoint: " << final_path.string() << "\n";
  return kExitOk;
}

int cmd_generate(const CommonArgs& args, const std::string& checkpoint,
                 const std::string& audio, std::int64_t identity, const std::string& output,
                 const std::optional<std::string>& style_ref,
                 std::optional<std::int64_t> frames, std::int64_t refresh_every) {
  auto [config, text] = resolve_config(args);
  (void)text;
  torch::manual_seed(config.train.seed);
  data::Corpus corpus(config.paths.manifest);
  Model model(make_model_config(config, corpus), corpus.topology());
  training::load_model_parameters(model, training::load_checkpoint(checkpoint));

  auto clip = read_wav(audio);
  if (identity < 0 || identity >= corpus.num_identities()) {
    throw InputError("identity index out of range for this corpus");
  }
  IdentityLabel label{identity, corpus.num_identities()};
  std::optional<MotionSequence> reference;
  if (style_ref) reference = read_mesh_sequence(*style_ref);

  auto seq = model.generate(clip, label, corpus.template_for(identity), frames, reference,
                            refresh_every, config.data.fps);
  if (auto parent = fs::path(output).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  write_mesh_sequence(seq, output);
  std::cout << "wrote " << seq.frame_count() << " frames to " << output << "\n";
  return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& split) {
  auto [config, text] = resolve_config(args);
  (void)text;
  torch::manual_seed(config.train.seed);
  data::Corpus corpus(config.paths.manifest);
  Model model(make_model_config(config, corpus), corpus.topology());
  training::load_model_parameters(model, training::load_checkpoint(checkpoint));

  auto report = evaluate_split(model, corpus, split);
  std::cout << report.to_table();
  fs::create_directories(config.paths.output_dir);
  auto out_path = fs::path(config.paths.output_dir) / ("eval_" + split + ".json");
  std::ofstream os(out_path);
  os << report.to_json() << "\n";
  std::cout << "report written to " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_gradcheck() {
  gradcheck::CheckOptions options;
  auto results = gradcheck::run_all(options);
  bool all_passed = true;
  std::printf("%-28s %-6s %12s %8s\n", "check", "status", "worst_ratio", "coords");
  for (const auto& r : results) {
    all_passed = all_passed && r.passed;
    std::printf("%-28s %-6s %12.4g %8lld\n", r.name.c_str(), r.passed ? "pass" : "FAIL",
                r.worst_ratio, static_cast<long long>(r.coordinates));
  }
  bool control = gradcheck::negative_control(options);
  std::printf("%-28s %-6s\n", "negative_control", control ? "pass" : "FAIL");
  if (!all_passed || !control) {
    std::cerr << "gradient checks failed\n";
    return kExitNumericError;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-driven 3D talking mesh: synthesis, training, evaluation"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, gen_args, eval_args;
  std::optional<std::string> resume;
  std::string checkpoint, audio, output = "generated.ptkm", split = "test";
  std::optional<std::string> style_ref;
  std::int64_t identity = 0, refresh_every = 0;
  std::optional<std::int64_t> frames;

  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic corpus");
  add_common(synth, synth_args);

  auto* train = app.add_subcommand("train", "Run the two-stage training");
  add_common(train, train_args);
  train->add_option("--resume", resume, "Resume from a checkpoint file");

  auto* gen = app.add_subcommand("generate", "Drive a face mesh from audio");
  add_common(gen, gen_args);
  gen->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  gen->add_option("--audio", audio, "Input WAV (16 kHz mono PCM)")->required();
  gen->add_option("--identity", identity, "Identity index");
  gen->add_option("--output", output, "Output mesh sequence path");
  gen->add_option("--style-ref", style_ref, "Mesh sequence supplying the motion style");
  gen->add_option("--frames", frames, "Frame count (default: from audio duration)");
  gen->add_option("--refresh-every", refresh_every,
                  "Refresh motion style/content every N steps (0: two-pass)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "Manifest split (train/val/test)");

  app.add_subcommand("gradcheck", "Finite-difference checks for losses and layers");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("synth-data")) return cmd_synth_data(synth_args);
    if (app.got_subcommand("train")) return cmd_train(train_args, resume);
    if (app.got_subcommand("generate")) {
      return cmd_generate(gen_args, checkpoint, audio, identity, output, style_ref, frames,
                          refresh_every);
    }
    if (app.got_subcommand("eval")) return cmd_eval(eval_args, checkpoint, split);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIoError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
