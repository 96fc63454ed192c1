#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talkmesh/model_config.hpp"
#include "talkmesh/training.hpp"

namespace talkmesh {

/// Everything the CLI needs: paths, corpus settings, model dimensions,
/// training schedule and loss weights. Serialized as one JSON document;
/// precedence is command-line override > config file > default.
struct GlobalConfig {
  struct Paths {
    std::string manifest = "corpus/manifest.json";
    std::string checkpoint_dir = "checkpoints";
    std::string output_dir = "output";
  } paths;

  struct DataConfig {
    std::int64_t sequences = 200;
    std::int64_t frames = 75;
    double fps = 25.0;
    std::uint64_t seed = 7;
  } data;

  ModelConfig model;  // vertex_count/num_identities filled from the corpus
  training::TrainConfig train;

  nlohmann::json to_json() const;
  static GlobalConfig from_json(const nlohmann::json& j);
};

/// Loads the layered configuration: defaults, then the optional file, then
/// repeatable key=value overrides with dotted paths (e.g.
/// "train.learning_rate=0.001"). Returns the config and its canonical JSON
/// text (used for the checkpoint config hash).
std::pair<GlobalConfig, std::string> load_config(const std::optional<std::string>& path,
                                                 const std::vector<std::string>& overrides);

}  // namespace talkmesh
