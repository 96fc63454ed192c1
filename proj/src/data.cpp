#include "talkmesh/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace talkmesh {
namespace data {

namespace fs = std::filesystem;
using json = nlohmann::json;

void SyntheticStyleSpec::validate() const {
  if (!(mouth_amplitude > 0)) throw ConfigError("style spec: mouth_amplitude must be > 0");
  if (!(articulation_sharpness > 0) || articulation_sharpness > 1) {
    throw ConfigError("style spec: articulation_sharpness must be in (0, 1]");
  }
  if (!std::isfinite(lip_protrusion)) throw ConfigError("style spec: lip_protrusion not finite");
}

const std::vector<Phoneme>& phoneme_inventory() {
  // Formant pairs roughly spanning the vowel space, openings in [0.15, 1].
  static const std::vector<Phoneme> inventory = {
      {300, 2300, 0.25}, {400, 2000, 0.45}, {500, 1700, 0.65}, {700, 1200, 1.00},
      {600, 900, 0.80},  {450, 1100, 0.55}, {350, 800, 0.35},  {550, 2100, 0.70},
      {650, 1500, 0.90}, {380, 1900, 0.40}, {480, 950, 0.60},  {320, 1300, 0.15},
  };
  return inventory;
}

MeshTopology make_synthetic_topology(std::int64_t rows, std::int64_t cols, double spacing_mm) {
  (void)spacing_mm;
  if (rows < 6 || cols < 6) throw ConfigError("synthetic topology needs at least a 6x6 grid");
  MeshTopology topo;
  topo.vertex_count = rows * cols;
  auto vid = [cols](std::int64_t r, std::int64_t c) { return r * cols + c; };
  for (std::int64_t r = 0; r + 1 < rows; ++r) {
    for (std::int64_t c = 0; c + 1 < cols; ++c) {
      topo.faces.push_back({vid(r, c), vid(r, c + 1), vid(r + 1, c)});
      topo.faces.push_back({vid(r + 1, c), vid(r, c + 1), vid(r + 1, c + 1)});
    }
  }
  topo.edges = derive_edges(topo.faces, topo.vertex_count);
  topo.lip_mask.assign(static_cast<std::size_t>(topo.vertex_count), false);
  topo.upper_face_mask.assign(static_cast<std::size_t>(topo.vertex_count), false);
  // Lips: two center-bottom rows, middle half of the columns.
  for (std::int64_t r = 1; r <= 2; ++r) {
    for (std::int64_t c = cols / 4; c < cols - cols / 4; ++c) {
      topo.lip_mask[static_cast<std::size_t>(vid(r, c))] = true;
    }
  }
  // Upper face: top three rows.
  for (std::int64_t r = rows - 3; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      topo.upper_face_mask[static_cast<std::size_t>(vid(r, c))] = true;
    }
  }
  topo.validate();
  return topo;
}

torch::Tensor synthetic_template(const MeshTopology& topology, double spacing_mm) {
  // Infer the grid from the vertex count layout used by make_synthetic_topology.
  auto verts = torch::zeros({topology.vertex_count, 3}, torch::kFloat64);
  std::int64_t cols = 0;
  for (const auto& e : topology.edges) cols = std::max(cols, e.second - e.first);
  if (cols < 2) cols = topology.vertex_count;
  auto acc = verts.accessor<double, 2>();
  for (std::int64_t v = 0; v < topology.vertex_count; ++v) {
    acc[v][0] = static_cast<double>(v % cols) * spacing_mm;
    acc[v][1] = static_cast<double>(v / cols) * spacing_mm;
    acc[v][2] = 0.0;
  }
  return verts;
}

std::vector<SyntheticStyleSpec> default_style_palette() {
  std::vector<SyntheticStyleSpec> styles;
  for (std::int64_t i = 0; i < 8; ++i) {
    SyntheticStyleSpec s;
    s.style_id = i;
    s.mouth_amplitude = 0.6 + 0.2 * static_cast<double>(i);          // 0.6 .. 2.0
    s.lip_protrusion = 0.5 * static_cast<double>(i % 4);             // 0 .. 1.5 mm
    s.articulation_sharpness = (i % 2 == 0) ? 1.0 : 0.45 + 0.05 * i; // crisp vs slurred
    styles.push_back(s);
  }
  return styles;
}

SyntheticPair generate_synthetic_pair(std::uint64_t content_seed,
                                      const SyntheticStyleSpec& style, std::int64_t frames,
                                      const MeshTopology& topology,
                                      std::int64_t num_identities, double fps,
                                      int sample_rate) {
  style.validate();
  if (frames < 2) throw ConfigError("synthetic pair needs at least 2 frames");
  if (style.style_id < 0 || style.style_id >= num_identities) {
    throw ConfigError("style_id outside the identity range");
  }

  const auto& inventory = phoneme_inventory();
  std::mt19937_64 rng(content_seed * 0x9e3779b97f4a7c15ULL + 0x853c49e6748fea9bULL);
  std::uniform_int_distribution<std::size_t> pick(0, inventory.size() - 1);
  std::uniform_int_distribution<std::int64_t> dur(4, 9);  // 160-360 ms at 25 fps

  // Phoneme schedule covering all frames; timing depends only on content_seed.
  std::vector<std::size_t> phoneme_of_frame;
  std::vector<double> progress_of_frame;
  while (static_cast<std::int64_t>(phoneme_of_frame.size()) < frames) {
    auto p = pick(rng);
    auto d = dur(rng);
    for (std::int64_t k = 0; k < d; ++k) {
      phoneme_of_frame.push_back(p);
      progress_of_frame.push_back((static_cast<double>(k) + 0.5) / static_cast<double>(d));
    }
  }
  phoneme_of_frame.resize(static_cast<std::size_t>(frames));
  progress_of_frame.resize(static_cast<std::size_t>(frames));

  std::uniform_real_distribution<double> brow_phase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> brow_cycles(0.5, 2.5);
  const double brow_p = brow_phase(rng);
  const double brow_c = brow_cycles(rng);

  // Raw opening curve, then style scaling and one-pole smoothing.
  std::vector<double> raw(static_cast<std::size_t>(frames));
  std::vector<double> opening(static_cast<std::size_t>(frames));
  for (std::int64_t t = 0; t < frames; ++t) {
    auto i = static_cast<std::size_t>(t);
    raw[i] = inventory[phoneme_of_frame[i]].opening * std::sin(M_PI * progress_of_frame[i]);
    double scaled = style.mouth_amplitude * raw[i];
    opening[i] = (t == 0) ? style.articulation_sharpness * scaled
                          : style.articulation_sharpness * scaled +
                                (1.0 - style.articulation_sharpness) * opening[i - 1];
  }

  // Motion: template plus lip opening (downward), protrusion (outward) and a
  // content-driven brow wave on the upper face.
  auto tmpl = synthetic_template(topology);
  auto frames_t = tmpl.unsqueeze(0).repeat({frames, 1, 1});
  auto acc = frames_t.accessor<double, 3>();
  auto lips = topology.lip_indices();
  auto upper = topology.upper_face_indices();
  for (std::int64_t t = 0; t < frames; ++t) {
    auto i = static_cast<std::size_t>(t);
    for (auto v : lips) {
      acc[t][v][1] -= 4.0 * opening[i];             // mm, jaw opening
      acc[t][v][2] += style.lip_protrusion;         // static outward offset
    }
    double brow = 0.6 * std::sin(2.0 * M_PI * brow_c * static_cast<double>(t) /
                                     static_cast<double>(frames) +
                                 brow_p);
    for (auto v : upper) acc[t][v][1] += brow;
  }

  // Audio: harmonic stack at a per-style fundamental, amplitudes shaped by
  // the phoneme formants, envelope following the articulation.
  const double f0 = 100.0 + 14.0 * static_cast<double>(style.style_id);
  const auto samples_per_frame = static_cast<std::int64_t>(
      std::llround(static_cast<double>(sample_rate) / fps));
  const auto num_samples = frames * samples_per_frame;
  auto audio = torch::zeros({num_samples}, torch::kFloat64);
  auto aud = audio.accessor<double, 1>();
  const int max_harmonics = static_cast<int>(7600.0 / f0);
  for (std::int64_t n = 0; n < num_samples; ++n) {
    auto frame = std::min<std::int64_t>(n / samples_per_frame, frames - 1);
    const auto& ph = inventory[phoneme_of_frame[static_cast<std::size_t>(frame)]];
    double env = 0.15 + 0.6 * raw[static_cast<std::size_t>(frame)];
    double tsec = static_cast<double>(n) / sample_rate;
    double value = 0.0;
    for (int h = 1; h <= max_harmonics; ++h) {
      double hz = h * f0;
      double w = std::exp(-std::pow((hz - ph.f1) / 120.0, 2)) +
                 0.7 * std::exp(-std::pow((hz - ph.f2) / 160.0, 2)) +
                 (h <= 2 ? 0.35 : 0.0);  // keep the fundamental audible
      if (w < 1e-4) continue;
      value += w * std::sin(2.0 * M_PI * hz * tsec);
    }
    aud[n] = 0.22 * env * value;
  }

  SyntheticPair pair;
  pair.audio = {audio.to(torch::kFloat32), sample_rate};
  pair.motion = {frames_t.to(torch::kFloat32), static_cast<float>(fps)};
  pair.identity = {style.style_id, num_identities};
  pair.raw_opening = raw;
  return pair;
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
  json j;
  j["topology"] = manifest.topology_path;
  j["templates"] = manifest.template_paths;
  auto entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"audio", e.audio_path},
                       {"mesh", e.mesh_path},
                       {"identity", e.identity},
                       {"split", e.split}});
  }
  j["entries"] = entries;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest: " + path);
  os << j.dump(2) << "\n";
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("manifest parse error in " + path + ": " + e.what());
  }
  CorpusManifest m;
  try {
    m.topology_path = j.at("topology").get<std::string>();
    m.template_paths = j.at("templates").get<std::vector<std::string>>();
    for (const auto& e : j.value("entries", json::array())) {
      m.entries.push_back({e.at("audio").get<std::string>(), e.at("mesh").get<std::string>(),
                           e.at("identity").get<std::int64_t>(),
                           e.value("split", std::string("train"))});
    }
  } catch (const json::exception& e) {
    throw IoError("manifest field error in " + path + ": " + e.what());
  }
  return m;
}

Corpus::Corpus(const std::string& manifest_path) {
  auto manifest = load_manifest(manifest_path);
  auto base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    auto fp = fs::path(p);
    return (fp.is_absolute() ? fp : base / fp).string();
  };

  topology_ = load_topology(resolve(manifest.topology_path));
  for (const auto& tp : manifest.template_paths) {
    auto path = resolve(tp);
    auto seq = read_mesh_sequence(path);
    if (seq.vertex_count() != topology_.vertex_count) {
      throw InputError("template vertex count mismatch in " + path + ": expected " +
                       std::to_string(topology_.vertex_count) + ", got " +
                       std::to_string(seq.vertex_count()));
    }
    templates_.push_back(seq.frames[0]);
  }
  const auto k = static_cast<std::int64_t>(templates_.size());
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (const auto& e : manifest.entries) {
    if (e.identity < 0 || e.identity >= k) {
      throw InputError("manifest identity index " + std::to_string(e.identity) +
                       " outside [0, " + std::to_string(k) + ") for " + e.mesh_path);
    }
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      throw InputError("manifest split must be train/val/test, got '" + e.split + "'");
    }
    seen[static_cast<std::size_t>(e.identity)] = true;
    ManifestEntry resolved = e;
    resolved.audio_path = resolve(e.audio_path);
    resolved.mesh_path = resolve(e.mesh_path);
    if (!fs::exists(resolved.audio_path)) {
      throw IoError("missing audio file: " + resolved.audio_path);
    }
    if (!fs::exists(resolved.mesh_path)) {
      throw IoError("missing mesh file: " + resolved.mesh_path);
    }
    entries_.push_back(std::move(resolved));
  }
  if (!entries_.empty()) {
    for (std::int64_t i = 0; i < k; ++i) {
      if (!seen[static_cast<std::size_t>(i)]) {
        throw InputError("identity indices not dense: identity " + std::to_string(i) +
                         " unused");
      }
    }
  }
}

const torch::Tensor& Corpus::template_for(std::int64_t identity) const {
  return templates_.at(static_cast<std::size_t>(identity));
}

std::vector<std::size_t> Corpus::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].split == split) out.push_back(i);
  }
  return out;
}

TrainingExample Corpus::load(std::size_t i) const {
  const auto& e = entries_.at(i);
  TrainingExample ex;
  ex.audio = read_wav(e.audio_path);
  ex.motion = read_mesh_sequence(e.mesh_path);
  if (ex.motion.vertex_count() != topology_.vertex_count) {
    throw InputError("vertex count mismatch in " + e.mesh_path + ": expected " +
                     std::to_string(topology_.vertex_count) + ", got " +
                     std::to_string(ex.motion.vertex_count()));
  }
  ex.identity = {e.identity, num_identities()};
  ex.template_verts = templates_.at(static_cast<std::size_t>(e.identity));
  return ex;
}

CorpusSummary generate_corpus(const std::string& directory, std::int64_t num_sequences,
                              std::int64_t frames, std::uint64_t seed,
                              const std::vector<SyntheticStyleSpec>& styles, double fps) {
  if (styles.empty()) throw ConfigError("corpus generation needs at least one style");
  fs::create_directories(fs::path(directory) / "audio");
  fs::create_directories(fs::path(directory) / "mesh");

  auto topology = make_synthetic_topology();
  save_topology(topology, (fs::path(directory) / "topology.json").string());

  // Keep the identity range dense: never emit templates for styles that can
  // never appear in a corpus smaller than the palette.
  const auto k = std::min<std::int64_t>(static_cast<std::int64_t>(styles.size()),
                                        std::max<std::int64_t>(num_sequences, 0));
  auto tmpl = synthetic_template(topology).to(torch::kFloat32);
  CorpusManifest manifest;
  manifest.topology_path = "topology.json";
  for (std::int64_t i = 0; i < k; ++i) {
    auto name = "template_" + std::to_string(i) + ".ptkm";
    write_mesh_sequence({tmpl.unsqueeze(0), static_cast<float>(fps)},
                        (fs::path(directory) / name).string());
    manifest.template_paths.push_back(name);
  }

  CorpusSummary summary;
  summary.identities = k;
  for (std::int64_t i = 0; i < num_sequences; ++i) {
    const auto& style = styles[static_cast<std::size_t>(i % k)];
    auto content_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    auto pair = generate_synthetic_pair(content_seed, style, frames, topology, k, fps);

    char stem[32];
    std::snprintf(stem, sizeof(stem), "seq_%05lld", static_cast<long long>(i));
    ManifestEntry entry;
    entry.audio_path = std::string("audio/") + stem + ".wav";
    entry.mesh_path = std::string("mesh/") + stem + ".ptkm";
    entry.identity = style.style_id;
    entry.split = (i % 10 == 8) ? "val" : (i % 10 == 9) ? "test" : "train";
    write_wav(pair.audio, (fs::path(directory) / entry.audio_path).string());
    write_mesh_sequence(pair.motion, (fs::path(directory) / entry.mesh_path).string());
    manifest.entries.push_back(entry);

    summary.sequences += 1;
    summary.total_frames += frames;
    if (entry.split == "train") summary.train += 1;
    else if (entry.split == "val") summary.val += 1;
    else summary.test += 1;
  }
  save_manifest(manifest, (fs::path(directory) / "manifest.json").string());
  return summary;
}

}  // namespace data
}  // namespace talkmesh
