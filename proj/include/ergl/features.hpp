#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ergl/audio.hpp"

namespace ergl {

inline constexpr int kMelBins = 64;
inline constexpr int kWinSize = 1024;
inline constexpr int kHopSize = 320;
inline constexpr int kCanonicalRate = 32000;
inline constexpr double kLogFloor = 1e-10;

// T x 64 log-energy matrix, row-major, float32.
struct LogMelFeature {
  int64_t frames = 0;
  int64_t mel_bins = kMelBins;
  std::vector<float> values;

  float at(int64_t t, int64_t m) const { return values[t * mel_bins + m]; }
};

struct Spectrogram {
  int64_t frames = 0;
  int64_t bins = 0;  // win/2 + 1
  std::vector<std::complex<double>> values;

  const std::complex<double>& at(int64_t t, int64_t k) const { return values[t * bins + k]; }
};

// Frames fully contained in the signal: 1 + floor((len - win) / hop).
// Throws InputError when the clip is shorter than one window.
int64_t stft_frame_count(int64_t num_samples, int win = kWinSize, int hop = kHopSize);

std::vector<double> hamming_window(int n);

// Windowed DFT per frame; frame t starts at t*hop, no centering or padding.
Spectrogram stft(const AudioClip& clip, int win = kWinSize, int hop = kHopSize);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular mel filters, n_mels x (n_fft/2 + 1) row-major. fmax < 0 means
// sr/2. Throws ConfigError when any filter ends up with empty support.
std::vector<double> mel_filterbank(int sample_rate, int n_fft = kWinSize, int n_mels = kMelBins,
                                   double fmin = 0.0, double fmax = -1.0);

// log(max(filterbank * |X|^2, 1e-10)), T x 64. The clip is resampled to
// 32 kHz first when needed.
LogMelFeature log_mel(const AudioClip& clip);

// Feature cache: magic "ERGLFEAT", version u16, T u32, bins u32, f32 LE data.
void save_feature(const std::string& path, const LogMelFeature& feature);
LogMelFeature load_feature(const std::string& path);

}  // namespace ergl
