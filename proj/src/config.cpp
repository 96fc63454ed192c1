#include "talkmesh/config.hpp"

#include <fstream>

namespace talkmesh {

using json = nlohmann::json;

namespace {

torch::Dtype dtype_from_name(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  throw ConfigError("model.dtype must be float32 or float64, got '" + name + "'");
}

std::string dtype_name(torch::Dtype dtype) {
  return dtype == torch::kFloat64 ? "float64" : "float32";
}

json weights_to_json(const losses::LossWeights& w) {
  return {{"w1", w.w1},
          {"w2", w.w2},
          {"w3", w.w3},
          {"alpha1", w.alpha1},
          {"alpha2", w.alpha2},
          {"alpha3", w.alpha3},
          {"beta1", w.beta1},
          {"beta2", w.beta2},
          {"beta3", w.beta3},
          {"beta4", w.beta4},
          {"beta5", w.beta5},
          {"beta_cos", w.beta_cos},
          {"lambda", w.lambda},
          {"tau", w.tau},
          {"top_k", w.top_k},
          {"alpha_pos", w.alpha_pos},
          {"beta_neg", w.beta_neg},
          {"alpha_c_max", w.alpha_c_max},
          {"info_sign", w.info_sign}};
}

losses::LossWeights weights_from_json(const json& j) {
  losses::LossWeights w;
  w.w1 = j.at("w1");
  w.w2 = j.at("w2");
  w.w3 = j.at("w3");
  w.alpha1 = j.at("alpha1");
  w.alpha2 = j.at("alpha2");
  w.alpha3 = j.at("alpha3");
  w.beta1 = j.at("beta1");
  w.beta2 = j.at("beta2");
  w.beta3 = j.at("beta3");
  w.beta4 = j.at("beta4");
  w.beta5 = j.at("beta5");
  w.beta_cos = j.at("beta_cos");
  w.lambda = j.at("lambda");
  w.tau = j.at("tau");
  w.top_k = j.at("top_k");
  w.alpha_pos = j.at("alpha_pos");
  w.beta_neg = j.at("beta_neg");
  w.alpha_c_max = j.at("alpha_c_max");
  w.info_sign = j.at("info_sign");
  return w;
}

json ablations_to_json(const AblationFlags& a) {
  return {{"adversarial", a.adversarial},
          {"style_similarity", a.style_similarity},
          {"orthogonality", a.orthogonality},
          {"mutual_info", a.mutual_info},
          {"contrastive", a.contrastive},
          {"graph_encoder", a.graph_encoder},
          {"audio_disentanglement", a.audio_disentanglement},
          {"motion_disentanglement", a.motion_disentanglement}};
}

AblationFlags ablations_from_json(const json& j) {
  AblationFlags a;
  a.adversarial = j.at("adversarial");
  a.style_similarity = j.at("style_similarity");
  a.orthogonality = j.at("orthogonality");
  a.mutual_info = j.at("mutual_info");
  a.contrastive = j.at("contrastive");
  a.graph_encoder = j.at("graph_encoder");
  a.audio_disentanglement = j.at("audio_disentanglement");
  a.motion_disentanglement = j.at("motion_disentanglement");
  return a;
}

}  // namespace

json GlobalConfig::to_json() const {
  json j;
  j["paths"] = {{"manifest", paths.manifest},
                {"checkpoint_dir", paths.checkpoint_dir},
                {"output_dir", paths.output_dir}};
  j["data"] = {{"sequences", data.sequences},
               {"frames", data.frames},
               {"fps", data.fps},
               {"seed", data.seed}};
  j["model"] = {{"style_dim", model.style_dim},
                {"audio_dim", model.audio_dim},
                {"motion_dim", model.motion_dim},
                {"graph_dim", model.graph_dim},
                {"graph_layers", model.graph_layers},
                {"frontend_dim", model.frontend_dim},
                {"heads", model.heads},
                {"encoder_layers", model.encoder_layers},
                {"decoder_layers", model.decoder_layers},
                {"ff_multiplier", model.ff_multiplier},
                {"decoder_dim", model.decoder_dim},
                {"period", model.period},
                {"alignment_slope", model.alignment_slope},
                {"classifier_hidden", model.classifier_hidden},
                {"mel_bands", model.mel.num_bands},
                {"dtype", dtype_name(model.dtype)}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"stage1_steps", train.stage1_steps},
                {"stage2_steps", train.stage2_steps},
                {"batch_size", train.batch_size},
                {"seed", train.seed},
                {"grad_clip", train.grad_clip},
                {"grl_ramp_fraction", train.grl_ramp_fraction},
                {"log_every", train.log_every},
                {"weights", weights_to_json(train.weights)},
                {"ablations", ablations_to_json(train.ablations)}};
  return j;
}

GlobalConfig GlobalConfig::from_json(const json& j) {
  GlobalConfig c;
  try {
    const auto& p = j.at("paths");
    c.paths.manifest = p.at("manifest");
    c.paths.checkpoint_dir = p.at("checkpoint_dir");
    c.paths.output_dir = p.at("output_dir");

    const auto& d = j.at("data");
    c.data.sequences = d.at("sequences");
    c.data.frames = d.at("frames");
    c.data.fps = d.at("fps");
    c.data.seed = d.at("seed");

    const auto& m = j.at("model");
    c.model.style_dim = m.at("style_dim");
    c.model.audio_dim = m.at("audio_dim");
    c.model.motion_dim = m.at("motion_dim");
    c.model.graph_dim = m.at("graph_dim");
    c.model.graph_layers = m.at("graph_layers");
    c.model.frontend_dim = m.at("frontend_dim");
    c.model.heads = m.at("heads");
    c.model.encoder_layers = m.at("encoder_layers");
    c.model.decoder_layers = m.at("decoder_layers");
    c.model.ff_multiplier = m.at("ff_multiplier");
    c.model.decoder_dim = m.at("decoder_dim");
    c.model.period = m.at("period");
    c.model.alignment_slope = m.at("alignment_slope");
    c.model.classifier_hidden = m.at("classifier_hidden");
    c.model.mel.num_bands = m.at("mel_bands");
    c.model.dtype = dtype_from_name(m.at("dtype"));

    const auto& t = j.at("train");
    c.train.learning_rate = t.at("learning_rate");
    c.train.stage1_steps = t.at("stage1_steps");
    c.train.stage2_steps = t.at("stage2_steps");
    c.train.batch_size = t.at("batch_size");
    c.train.seed = t.at("seed");
    c.train.grad_clip = t.at("grad_clip");
    c.train.grl_ramp_fraction = t.at("grl_ramp_fraction");
    c.train.log_every = t.at("log_every");
    c.train.weights = weights_from_json(t.at("weights"));
    c.train.ablations = ablations_from_json(t.at("ablations"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  return c;
}

std::pair<GlobalConfig, std::string> load_config(const std::optional<std::string>& path,
                                                 const std::vector<std::string>& overrides) {
  json doc = GlobalConfig{}.to_json();
  if (path) {
    std::ifstream is(*path);
    if (!is) throw IoError("cannot open config file: " + *path);
    json file_doc;
    try {
      is >> file_doc;
    } catch (const json::exception& e) {
      throw ConfigError("config parse error in " + *path + ": " + e.what());
    }
    doc.merge_patch(file_doc);
  }
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    auto key = kv.substr(0, eq);
    auto value = kv.substr(eq + 1);
    std::string pointer = "/";
    for (char ch : key) pointer += (ch == '.') ? '/' : ch;
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // plain strings need no quoting
    }
    try {
      doc[json::json_pointer(pointer)] = parsed;
    } catch (const json::exception& e) {
      throw ConfigError("bad --set key '" + key + "': " + e.what());
    }
  }
  auto config = GlobalConfig::from_json(doc);
  return {config, doc.dump()};
}

}  // namespace talkmesh
