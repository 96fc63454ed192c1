#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/audio.hpp"
#include "talkmesh/encoders.hpp"
#include "talkmesh/mesh.hpp"

namespace talkmesh {
namespace data {

/// Planted style factors for one synthetic speaker.
struct SyntheticStyleSpec {
  std::int64_t style_id = 0;
  double mouth_amplitude = 1.0;        // scales lip opening, must be > 0
  double lip_protrusion = 0.0;         // static outward lip offset, mm
  double articulation_sharpness = 1.0; // one-pole smoothing constant in (0, 1]

  void validate() const;
};

/// Pseudo-phoneme: a formant pair shaping the audio spectrum and a lip
/// opening target shaping the motion.
struct Phoneme {
  double f1 = 0.0;
  double f2 = 0.0;
  double opening = 0.0;
};

/// The 12-unit pseudo-phoneme inventory with distinct formant pairs.
const std::vector<Phoneme>& phoneme_inventory();

/// Rectangular grid face stand-in with lip and upper-face bands.
MeshTopology make_synthetic_topology(std::int64_t rows = 10, std::int64_t cols = 12,
                                     double spacing_mm = 5.0);

/// Neutral vertex positions for the synthetic topology.
torch::Tensor synthetic_template(const MeshTopology& topology, double spacing_mm = 5.0);

struct SyntheticPair {
  AudioClip audio;
  MotionSequence motion;
  IdentityLabel identity;
  /// Lip opening curve before smoothing, length T (diagnostic for tests).
  std::vector<double> raw_opening;
};

/// Deterministic synthetic example: a pseudo-phoneme string drawn from
/// content_seed drives both the harmonic audio and the lip opening curve;
/// the style spec scales/offsets/smooths the motion and sets the speaker
/// pitch. Phoneme timing depends only on content_seed.
SyntheticPair generate_synthetic_pair(std::uint64_t content_seed,
                                      const SyntheticStyleSpec& style, std::int64_t frames,
                                      const MeshTopology& topology,
                                      std::int64_t num_identities, double fps = 25.0,
                                      int sample_rate = 16000);

/// Default palette of 8 planted styles.
std::vector<SyntheticStyleSpec> default_style_palette();

struct ManifestEntry {
  std::string audio_path;
  std::string mesh_path;
  std::int64_t identity = 0;
  std::string split = "train";  // train | val | test
};

struct CorpusManifest {
  std::string topology_path;
  std::vector<std::string> template_paths;  // one per identity
  std::vector<ManifestEntry> entries;
};

void save_manifest(const CorpusManifest& manifest, const std::string& path);
CorpusManifest load_manifest(const std::string& path);

struct TrainingExample {
  AudioClip audio;
  MotionSequence motion;
  IdentityLabel identity;
  torch::Tensor template_verts;  // N_v x 3
};

/// Validated corpus handle. Construction checks that every referenced file
/// exists and parses and that vertex counts match the topology; examples
/// load lazily.
class Corpus {
 public:
  explicit Corpus(const std::string& manifest_path);

  const MeshTopology& topology() const { return topology_; }
  std::int64_t num_identities() const { return static_cast<std::int64_t>(templates_.size()); }
  const torch::Tensor& template_for(std::int64_t identity) const;

  std::vector<std::size_t> split_indices(const std::string& split) const;
  std::size_t size() const { return entries_.size(); }
  const ManifestEntry& entry(std::size_t i) const { return entries_.at(i); }

  TrainingExample load(std::size_t i) const;

 private:
  MeshTopology topology_;
  std::vector<torch::Tensor> templates_;
  std::vector<ManifestEntry> entries_;  // absolute paths
};

struct CorpusSummary {
  std::int64_t sequences = 0;
  std::int64_t identities = 0;
  std::int64_t train = 0, val = 0, test = 0;
  std::int64_t total_frames = 0;
};

/// Writes a complete synthetic corpus (topology, templates, WAV + mesh
/// sequences, manifest) under directory and returns its summary.
CorpusSummary generate_corpus(const std::string& directory, std::int64_t num_sequences,
                              std::int64_t frames, std::uint64_t seed,
                              const std::vector<SyntheticStyleSpec>& styles, double fps = 25.0);

}  // namespace data
}  // namespace talkmesh
