#include "talkmesh/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace talkmesh {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void write_le(std::ostream& os, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_le(std::istream& is, int bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    int c = is.get();
    if (c == EOF) throw IoError("unexpected end of wav file");
    v |= static_cast<std::uint32_t>(c) << (8 * i);
  }
  return v;
}

std::vector<double> mel_center_frequencies(const MelOptions& mel) {
  double lo = hz_to_mel(mel.fmin);
  double hi = hz_to_mel(mel.fmax);
  std::vector<double> centers(static_cast<std::size_t>(mel.num_bands) + 2);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    centers[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                    static_cast<double>(mel.num_bands + 1));
  }
  return centers;
}

}  // namespace

void AudioClip::validate() const {
  if (samples.dim() != 1 || samples.size(0) < 1) throw InputError("audio clip must be non-empty 1-D");
  if (sample_rate <= 0) throw InputError("audio sample rate must be positive");
  require_finite(samples, "audio clip");
}

void write_wav(const AudioClip& clip, const std::string& path) {
  clip.validate();
  auto s = clip.samples.to(torch::kFloat64).contiguous();
  const auto n = s.size(0);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write wav: " + path);
  std::uint32_t data_bytes = static_cast<std::uint32_t>(n * 2);
  os.write("RIFF", 4);
  write_le(os, 36 + data_bytes, 4);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_le(os, 16, 4);
  write_le(os, 1, 2);  // PCM
  write_le(os, 1, 2);  // mono
  write_le(os, static_cast<std::uint32_t>(clip.sample_rate), 4);
  write_le(os, static_cast<std::uint32_t>(clip.sample_rate * 2), 4);
  write_le(os, 2, 2);  // block align
  write_le(os, 16, 2); // bits per sample
  os.write("data", 4);
  write_le(os, data_bytes, 4);
  const double* p = s.data_ptr<double>();
  for (std::int64_t i = 0; i < n; ++i) {
    double v = std::clamp(p[i], -1.0, 1.0);
    auto q = static_cast<std::int16_t>(std::lrint(v * 32767.0));
    write_le(os, static_cast<std::uint16_t>(q), 2);
  }
  if (!os) throw IoError("short write on wav: " + path);
}

AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open wav: " + path);
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw IoError("not a RIFF wav: " + path);
  read_le(is, 4);
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw IoError("not a WAVE wav: " + path);

  AudioClip clip;
  std::vector<std::int16_t> pcm;
  bool have_fmt = false, have_data = false;
  while (is && !(have_fmt && have_data)) {
    is.read(tag, 4);
    if (!is) break;
    std::uint32_t size = read_le(is, 4);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      std::uint32_t format = read_le(is, 2);
      std::uint32_t channels = read_le(is, 2);
      clip.sample_rate = static_cast<int>(read_le(is, 4));
      read_le(is, 4);
      read_le(is, 2);
      std::uint32_t bits = read_le(is, 2);
      if (size > 16) is.ignore(size - 16);
      if (format != 1 || channels != 1 || bits != 16) {
        throw IoError("wav must be 16-bit PCM mono: " + path);
      }
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      pcm.resize(size / 2);
      for (auto& v : pcm) v = static_cast<std::int16_t>(read_le(is, 2));
      have_data = true;
    } else {
      is.ignore(size);
    }
  }
  if (!have_fmt || !have_data) throw IoError("wav missing fmt/data chunk: " + path);
  if (pcm.empty()) throw InputError("wav has no samples: " + path);
  clip.samples = torch::empty({static_cast<std::int64_t>(pcm.size())}, torch::kFloat32);
  float* out = clip.samples.data_ptr<float>();
  for (std::size_t i = 0; i < pcm.size(); ++i) {
    out[i] = static_cast<float>(pcm[i]) / 32767.0f;
  }
  return clip;
}

torch::Tensor mel_filterbank(const MelOptions& mel, int sample_rate, torch::Dtype dtype) {
  const std::int64_t bins = mel.window_length / 2 + 1;
  auto fb = torch::zeros({mel.num_bands, bins}, opts(torch::kFloat64));
  auto centers = mel_center_frequencies(mel);
  auto acc = fb.accessor<double, 2>();
  for (std::int64_t b = 0; b < mel.num_bands; ++b) {
    double left = centers[static_cast<std::size_t>(b)];
    double center = centers[static_cast<std::size_t>(b) + 1];
    double right = centers[static_cast<std::size_t>(b) + 2];
    for (std::int64_t k = 0; k < bins; ++k) {
      double hz = static_cast<double>(k) * sample_rate / static_cast<double>(mel.window_length);
      double w = 0.0;
      if (hz >= left && hz <= center && center > left) {
        w = (hz - left) / (center - left);
      } else if (hz > center && hz <= right && right > center) {
        w = (right - hz) / (right - center);
      }
      acc[b][k] = w;
    }
  }
  return fb.to(dtype);
}

std::int64_t mel_band_of_frequency(const MelOptions& mel, int sample_rate, double hz) {
  (void)sample_rate;
  auto centers = mel_center_frequencies(mel);
  std::int64_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::int64_t b = 0; b < mel.num_bands; ++b) {
    double d = std::abs(centers[static_cast<std::size_t>(b) + 1] - hz);
    if (d < best_dist) {
      best_dist = d;
      best = b;
    }
  }
  return best;
}

torch::Tensor log_mel_features(const AudioClip& clip, const MelOptions& mel, torch::Dtype dtype) {
  clip.validate();
  if (clip.length() < mel.window_length) {
    throw InputError("audio clip shorter than one analysis window (" +
                     std::to_string(mel.window_length) + " samples)");
  }
  auto samples = clip.samples.to(dtype);
  const std::int64_t frames = 1 + (clip.length() - mel.window_length) / mel.hop_length;
  auto windows = samples.unfold(0, mel.window_length, mel.hop_length);  // frames x win
  auto hann = 0.5 - 0.5 * torch::cos(2.0 * M_PI *
                                     torch::arange(mel.window_length, opts(dtype)) /
                                     static_cast<double>(mel.window_length));
  auto spec = torch::fft::rfft(windows.slice(0, 0, frames) * hann, mel.window_length, 1);
  auto power = spec.abs().pow(2);
  auto fb = mel_filterbank(mel, clip.sample_rate, dtype);
  auto energies = torch::matmul(power, fb.t());
  return torch::log(energies + mel.log_floor);
}

torch::Tensor interpolate_frames(const torch::Tensor& features, std::int64_t target_frames) {
  if (target_frames < 1) throw InputError("target frame count must be >= 1");
  const auto n = features.size(0);
  if (n == target_frames) return features;
  auto dtype = features.scalar_type();
  if (n == 1) return features.expand({target_frames, features.size(1)}).clone();
  auto pos = torch::arange(target_frames, opts(dtype)) *
             (static_cast<double>(n - 1) / std::max<std::int64_t>(target_frames - 1, 1));
  if (target_frames == 1) pos = torch::zeros({1}, opts(dtype));
  auto lo = pos.floor().clamp(0, n - 1);
  auto hi = (lo + 1).clamp(0, n - 1);
  auto frac = (pos - lo).unsqueeze(1);
  auto lo_rows = features.index_select(0, lo.to(torch::kInt64));
  auto hi_rows = features.index_select(0, hi.to(torch::kInt64));
  return lo_rows * (1 - frac) + hi_rows * frac;
}

AudioFrontend::AudioFrontend(const MelOptions& mel, std::int64_t out_dim, torch::Dtype dtype)
    : mel_(mel), out_dim_(out_dim), dtype_(dtype) {
  auto init = [&](std::int64_t out_c, std::int64_t in_c) {
    double bound = std::sqrt(1.0 / static_cast<double>(in_c * 3));
    return torch::empty({out_c, in_c, 3}, opts(dtype)).uniform_(-bound, bound);
  };
  conv1_w = register_parameter("conv1_w", init(out_dim, mel.num_bands));
  conv1_b = register_parameter("conv1_b", torch::zeros({out_dim}, opts(dtype)));
  conv2_w = register_parameter("conv2_w", init(out_dim, out_dim));
  conv2_b = register_parameter("conv2_b", torch::zeros({out_dim}, opts(dtype)));
}

torch::Tensor AudioFrontend::forward(const AudioClip& clip,
                                     std::optional<std::int64_t> target_frames) const {
  auto feats = log_mel_features(clip, mel_, dtype_);        // frames x bands
  auto x = feats.t().unsqueeze(0);                          // 1 x bands x frames
  x = torch::replication_pad1d(x, {1, 1});
  x = torch::leaky_relu(torch::conv1d(x, conv1_w, conv1_b), 0.2);
  x = torch::replication_pad1d(x, {1, 1});
  x = torch::leaky_relu(torch::conv1d(x, conv2_w, conv2_b), 0.2);
  auto out = x.squeeze(0).t();                              // frames x out_dim
  if (target_frames) return interpolate_frames(out, *target_frames);
  return out;
}

}  // namespace talkmesh
