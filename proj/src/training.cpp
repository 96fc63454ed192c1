#include "talkmesh/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <unordered_map>

namespace talkmesh {
namespace training {

void TrainConfig::validate() const {
  if (stage1_steps < 0 || stage2_steps < 0 || total_steps() < 1) {
    throw ConfigError("train config: step counts must be positive");
  }
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (batch_size < 2 && (ablations.contrastive || ablations.mutual_info)) {
    throw ConfigError("train config: batch_size must be >= 2 when contrastive losses run");
  }
  if (!(learning_rate > 0)) throw ConfigError("train config: learning_rate must be > 0");
  if (grad_clip < 0) throw ConfigError("train config: grad_clip must be >= 0");
  if (grl_ramp_fraction < 0 || grl_ramp_fraction > 1) {
    throw ConfigError("train config: grl_ramp_fraction must be in [0, 1]");
  }
  weights.validate(std::max<std::int64_t>(batch_size, 2));
}

double grl_schedule(std::int64_t step, std::int64_t total_steps, double alpha_max,
                    double ramp_fraction) {
  if (step < 0 || total_steps < 1) throw ConfigError("grl schedule: bad step counts");
  const double ramp = ramp_fraction * static_cast<double>(total_steps);
  if (ramp <= 0) return alpha_max;
  const double x = static_cast<double>(step) / ramp;
  return alpha_max * std::min(1.0, x);
}

Adam::Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1,
           double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params_) {
    exp_avg_.push_back(torch::zeros_like(p));
    exp_avg_sq_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  step_count_ += 1;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    if (!p.grad().defined() || !p.requires_grad()) continue;
    auto g = p.grad();
    exp_avg_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    exp_avg_sq_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    auto m_hat = exp_avg_[i] / bc1;
    auto v_hat = exp_avg_sq_[i] / bc2;
    p.add_(-lr_ * m_hat / (v_hat.sqrt() + eps_));
  }
}

std::vector<std::pair<std::string, torch::Tensor>> Adam::state_entries() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("opt/m/" + params_[i].first, exp_avg_[i]);
    out.emplace_back("opt/v/" + params_[i].first, exp_avg_sq_[i]);
  }
  return out;
}

void Adam::load_state_entry(const std::string& name, const torch::Tensor& value) {
  auto apply = [&](const std::string& prefix, std::vector<torch::Tensor>& slots) {
    if (name.rfind(prefix, 0) != 0) return false;
    auto param_name = name.substr(prefix.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].first == param_name) {
        torch::NoGradGuard no_grad;
        slots[i].copy_(value.to(slots[i].scalar_type()));
        return true;
      }
    }
    throw ConfigError("checkpoint optimizer entry for unknown parameter: " + param_name);
  };
  if (!apply("opt/m/", exp_avg_) && !apply("opt/v/", exp_avg_sq_)) {
    throw ConfigError("unrecognized optimizer state entry: " + name);
  }
}

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'T', 'K', 'C'};
constexpr unsigned char kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    os.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T read_le(std::istream& is) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    int c = is.get();
    if (c == EOF) throw IoError("unexpected end of checkpoint");
    v |= static_cast<std::uint64_t>(c) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(kCheckpointMagic, 4);
  os.put(static_cast<char>(kCheckpointVersion));
  write_le<std::uint64_t>(os, ckpt.step);
  write_le<std::uint64_t>(os, ckpt.config_hash);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.entries.size()));
  std::uint64_t offset = 0;
  std::vector<torch::Tensor> payloads;
  for (const auto& [name, tensor] : ckpt.entries) {
    auto flat = tensor.detach().to(torch::kFloat32).contiguous();
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(tensor.dim()));
    for (auto d : tensor.sizes()) write_le<std::int64_t>(os, d);
    write_le<std::uint64_t>(os, offset);
    offset += static_cast<std::uint64_t>(flat.numel()) * sizeof(float);
    payloads.push_back(flat);
  }
  for (const auto& flat : payloads) {
    os.write(reinterpret_cast<const char*>(flat.data_ptr<float>()),
             static_cast<std::streamsize>(flat.numel() * sizeof(float)));
  }
  if (!os) throw IoError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw IoError("corrupt checkpoint header (bad magic): " + path);
  }
  if (is.get() != kCheckpointVersion) throw IoError("unsupported checkpoint version: " + path);
  Checkpoint ckpt;
  ckpt.step = read_le<std::uint64_t>(is);
  ckpt.config_hash = read_le<std::uint64_t>(is);
  auto count = read_le<std::uint32_t>(is);
  struct Meta {
    std::string name;
    std::vector<std::int64_t> shape;
    std::uint64_t offset;
  };
  std::vector<Meta> metas;
  for (std::uint32_t i = 0; i < count; ++i) {
    Meta m;
    auto len = read_le<std::uint16_t>(is);
    m.name.resize(len);
    is.read(m.name.data(), len);
    int ndim = is.get();
    if (ndim < 0 || ndim > 8) throw IoError("corrupt checkpoint manifest: " + path);
    for (int d = 0; d < ndim; ++d) m.shape.push_back(read_le<std::int64_t>(is));
    m.offset = read_le<std::uint64_t>(is);
    metas.push_back(std::move(m));
  }
  auto payload_start = is.tellg();
  for (const auto& m : metas) {
    std::int64_t numel = 1;
    for (auto d : m.shape) numel *= d;
    auto t = torch::empty(m.shape, torch::kFloat32);
    is.seekg(payload_start + static_cast<std::streamoff>(m.offset));
    is.read(reinterpret_cast<char*>(t.data_ptr<float>()),
            static_cast<std::streamsize>(numel * sizeof(float)));
    if (is.gcount() != static_cast<std::streamsize>(numel * sizeof(float))) {
      throw IoError("truncated checkpoint payload: " + path);
    }
    ckpt.entries.emplace_back(m.name, t);
  }
  return ckpt;
}

std::string StepLog::header() {
  return "step rec mou vel motion adv cos orth info cts total";
}

std::string StepLog::line() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld %.6g %.6g %.6g %.6g %.6g %.6g %.6g %.6g %.6g %.6g",
                static_cast<long long>(step), reconstruction, mouth, velocity, motion,
                adversarial, style_similarity, orthogonality, mutual_info, contrastive, total);
  return buf;
}

Trainer::Trainer(Model& model, const TrainConfig& config, const data::Corpus& corpus,
                 std::uint64_t config_hash)
    : model_(model),
      config_(config),
      corpus_(corpus),
      config_hash_(config_hash),
      optimizer_([&] {
        config.validate();
        std::vector<std::pair<std::string, torch::Tensor>> params;
        for (const auto& p : model.named_parameters()) params.emplace_back(p.key(), p.value());
        return Adam(std::move(params), config.learning_rate);
      }()) {
  train_indices_ = corpus_.split_indices("train");
  if (static_cast<std::int64_t>(train_indices_.size()) < config_.batch_size) {
    throw ConfigError("training split smaller than one batch");
  }
  cache_.reserve(train_indices_.size());
  for (auto idx : train_indices_) cache_.push_back(corpus_.load(idx));
  const auto t0 = cache_.front().motion.frame_count();
  for (const auto& ex : cache_) {
    if (ex.motion.frame_count() != t0) {
      throw ConfigError("training requires uniform sequence length within the corpus");
    }
  }
  apply_stage_freezing();
}

void Trainer::apply_stage_freezing() {
  const bool freeze = step_ < config_.stage1_steps;
  auto style_names = model_.style_parameter_names();
  for (const auto& p : model_.named_parameters()) {
    bool is_style = std::find(style_names.begin(), style_names.end(), p.key()) !=
                    style_names.end();
    p.value().set_requires_grad(!(freeze && is_style));
  }
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t step) const {
  const auto n = static_cast<std::int64_t>(cache_.size());
  const auto batches_per_epoch = std::max<std::int64_t>(1, n / config_.batch_size);
  const auto epoch = step / batches_per_epoch;
  const auto slot = step % batches_per_epoch;
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(config_.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> batch;
  for (std::int64_t i = slot * config_.batch_size;
       i < std::min(n, (slot + 1) * config_.batch_size); ++i) {
    batch.push_back(order[static_cast<std::size_t>(i)]);
  }
  return batch;
}

Batch Trainer::make_batch(const std::vector<std::size_t>& indices) const {
  Batch batch;
  std::vector<torch::Tensor> motions, templates;
  std::vector<std::int64_t> labels;
  const auto dtype = model_.config().dtype;
  for (auto i : indices) {
    const auto& ex = cache_.at(i);
    batch.clips.push_back(ex.audio);
    motions.push_back(ex.motion.frames.to(dtype));
    templates.push_back(ex.template_verts.to(dtype));
    labels.push_back(ex.identity.index);
  }
  batch.motion = torch::stack(motions);
  batch.templates = torch::stack(templates);
  batch.labels = torch::tensor(labels, torch::kInt64);
  return batch;
}

void Trainer::run_until(std::int64_t until, const std::function<void(const StepLog&)>& on_log) {
  until = std::min(until, config_.total_steps());
  while (step_ < until) {
    if (step_ == config_.stage1_steps) apply_stage_freezing();
    auto batch = make_batch(batch_indices(step_));
    const double alpha_c = grl_schedule(step_, config_.total_steps(),
                                        config_.weights.alpha_c_max,
                                        config_.grl_ramp_fraction);
    auto out = model_.training_forward(batch, config_.weights, alpha_c, config_.ablations);
    if (!torch::isfinite(out.total).item<bool>()) {
      throw NumericError("non-finite training loss at step " + std::to_string(step_));
    }
    optimizer_.zero_grad();
    out.total.backward();
    if (config_.grad_clip > 0) {
      std::vector<torch::Tensor> grads;
      for (const auto& p : model_.named_parameters()) {
        if (p.value().grad().defined()) grads.push_back(p.value().grad());
      }
      torch::nn::utils::clip_grad_norm_(grads, config_.grad_clip);
    }
    optimizer_.step();
    step_ += 1;

    if (on_log && (step_ % config_.log_every == 0 || step_ == until)) {
      StepLog log;
      log.step = step_;
      log.reconstruction = out.motion_terms.reconstruction.item<double>();
      log.mouth = out.motion_terms.mouth.item<double>();
      log.velocity = out.motion_terms.velocity.item<double>();
      log.motion = out.motion_terms.total.item<double>();
      log.adversarial = out.adversarial.item<double>();
      log.style_similarity = out.style_similarity.item<double>();
      log.orthogonality = out.orthogonality.item<double>();
      log.mutual_info = out.mutual_info.item<double>();
      log.contrastive = out.contrastive.item<double>();
      log.total = out.total.item<double>();
      on_log(log);
    }
  }
  if (step_ >= config_.stage1_steps) apply_stage_freezing();
}

Checkpoint Trainer::capture() const {
  Checkpoint ckpt;
  for (const auto& p : model_.named_parameters()) {
    ckpt.entries.emplace_back("param/" + p.key(), p.value().detach().clone());
  }
  for (const auto& [name, tensor] : optimizer_.state_entries()) {
    ckpt.entries.emplace_back(name, tensor.clone());
  }
  ckpt.entries.emplace_back(
      "opt/t", torch::tensor({static_cast<float>(optimizer_.step_count())}, torch::kFloat32));
  ckpt.step = static_cast<std::uint64_t>(step_);
  ckpt.config_hash = config_hash_;
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (config_hash_ != 0 && ckpt.config_hash != 0 && ckpt.config_hash != config_hash_) {
    throw ConfigError("checkpoint was produced by a different configuration");
  }
  auto params = model_.named_parameters();
  torch::NoGradGuard no_grad;
  for (const auto& [name, tensor] : ckpt.entries) {
    if (name.rfind("param/", 0) == 0) {
      auto key = name.substr(6);
      auto* p = params.find(key);
      if (p == nullptr) throw ConfigError("checkpoint parameter not in model: " + key);
      if (!p->sizes().equals(tensor.sizes())) {
        throw ConfigError("checkpoint shape mismatch for " + key);
      }
      p->copy_(tensor.to(p->scalar_type()));
    } else if (name == "opt/t") {
      optimizer_.set_step_count(static_cast<std::int64_t>(tensor.item<float>()));
    } else if (name.rfind("opt/", 0) == 0) {
      optimizer_.load_state_entry(name, tensor);
    } else {
      throw ConfigError("unrecognized checkpoint entry: " + name);
    }
  }
  step_ = static_cast<std::int64_t>(ckpt.step);
  apply_stage_freezing();
}

Checkpoint train_stage1(Model& model, const TrainConfig& config, const data::Corpus& corpus,
                        const std::function<void(const StepLog&)>& on_log,
                        std::uint64_t config_hash) {
  Trainer trainer(model, config, corpus, config_hash);
  trainer.run_until(config.stage1_steps, on_log);
  return trainer.capture();
}

Checkpoint train_stage2(Model& model, const Checkpoint& start, const TrainConfig& config,
                        const data::Corpus& corpus,
                        const std::function<void(const StepLog&)>& on_log,
                        std::uint64_t config_hash) {
  Trainer trainer(model, config, corpus, config_hash);
  trainer.restore(start);
  trainer.run_until(config.total_steps(), on_log);
  return trainer.capture();
}

void load_model_parameters(Model& model, const Checkpoint& ckpt) {
  auto params = model.named_parameters();
  torch::NoGradGuard no_grad;
  for (const auto& [name, tensor] : ckpt.entries) {
    if (name.rfind("param/", 0) != 0) continue;
    auto key = name.substr(6);
    auto* p = params.find(key);
    if (p == nullptr) throw ConfigError("checkpoint parameter not in model: " + key);
    if (!p->sizes().equals(tensor.sizes())) {
      throw ConfigError("checkpoint shape mismatch for " + key);
    }
    p->copy_(tensor.to(p->scalar_type()));
  }
}

}  // namespace training
}  // namespace talkmesh
