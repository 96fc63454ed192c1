#pragma once

#include <optional>
#include <string>

#include <torch/torch.h>

#include "talkmesh/common.hpp"

namespace talkmesh {

/// Mono waveform in [-1, 1].
struct AudioClip {
  torch::Tensor samples;  // 1-D
  int sample_rate = 16000;

  std::int64_t length() const { return samples.size(0); }
  double duration_seconds() const { return static_cast<double>(length()) / sample_rate; }
  void validate() const;
};

// 16-bit PCM mono WAV.
void write_wav(const AudioClip& clip, const std::string& path);
AudioClip read_wav(const std::string& path);

struct MelOptions {
  std::int64_t num_bands = 26;
  std::int64_t window_length = 400;  // 25 ms at 16 kHz
  std::int64_t hop_length = 160;     // 10 ms
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
};

/// Triangular mel filterbank matrix (num_bands x num_fft_bins) on the HTK
/// mel scale.
torch::Tensor mel_filterbank(const MelOptions& mel, int sample_rate, torch::Dtype dtype);

/// Log mel filterbank energies, frames x num_bands. Hann window, magnitude
/// power spectrum, log(energy + log_floor). Pure function of the clip.
torch::Tensor log_mel_features(const AudioClip& clip, const MelOptions& mel, torch::Dtype dtype);

/// Index of the mel band whose center frequency is nearest to hz.
std::int64_t mel_band_of_frequency(const MelOptions& mel, int sample_rate, double hz);

/// Trainable audio frontend: log-mel features followed by a small temporal
/// convolution stack (replicate padding, so constant inputs stay constant in
/// time), linearly interpolated to a requested frame count. Stands in for a
/// pretrained speech backbone at this scale; any module with the same
/// signature can replace it.
class AudioFrontend : public torch::nn::Module {
 public:
  AudioFrontend(const MelOptions& mel, std::int64_t out_dim, torch::Dtype dtype);

  /// target_frames: resample output to exactly this many frames; nullopt
  /// keeps the native mel frame count.
  torch::Tensor forward(const AudioClip& clip,
                        std::optional<std::int64_t> target_frames = std::nullopt) const;

  std::int64_t out_dim() const { return out_dim_; }
  const MelOptions& mel_options() const { return mel_; }

 private:
  MelOptions mel_;
  std::int64_t out_dim_;
  torch::Dtype dtype_;
  torch::Tensor conv1_w, conv1_b;  // out_dim x num_bands x 3
  torch::Tensor conv2_w, conv2_b;  // out_dim x out_dim x 3
};

/// Linear interpolation of a frames x dim feature array along time to
/// target frames. Endpoints map to endpoints.
torch::Tensor interpolate_frames(const torch::Tensor& features, std::int64_t target_frames);

}  // namespace talkmesh
