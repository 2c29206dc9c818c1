#include "ergl/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ergl/errors.hpp"

namespace ergl {

namespace {

constexpr double kPi = 3.14159265358979323846;

// In-place iterative radix-2 FFT (decimation in time).
void fft_radix2(std::vector<std::complex<double>>& a) {
  size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("fft: size must be a power of two");

  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * kPi / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace

int64_t stft_frame_count(int64_t num_samples, int win, int hop) {
  if (num_samples < win)
    throw InputError("stft: clip of " + std::to_string(num_samples) +
                     " samples is shorter than one window (" + std::to_string(win) + ")");
  return 1 + (num_samples - win) / hop;
}

std::vector<double> hamming_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (n - 1));
  return w;
}

Spectrogram stft(const AudioClip& clip, int win, int hop) {
  int64_t frames = stft_frame_count(static_cast<int64_t>(clip.samples.size()), win, hop);
  auto window = hamming_window(win);

  Spectrogram spec;
  spec.frames = frames;
  spec.bins = win / 2 + 1;
  spec.values.resize(static_cast<size_t>(frames * spec.bins));

  std::vector<std::complex<double>> buf(static_cast<size_t>(win));
  for (int64_t t = 0; t < frames; ++t) {
    const float* src = clip.samples.data() + t * hop;
    for (int i = 0; i < win; ++i)
      buf[static_cast<size_t>(i)] = {static_cast<double>(src[i]) * window[static_cast<size_t>(i)],
                                     0.0};
    fft_radix2(buf);
    std::copy_n(buf.begin(), spec.bins, spec.values.begin() + t * spec.bins);
  }
  return spec;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filterbank(int sample_rate, int n_fft, int n_mels, double fmin,
                                   double fmax) {
  if (fmax < 0) fmax = sample_rate / 2.0;
  if (fmax > sample_rate / 2.0)
    throw ConfigError("mel_filterbank: fmax " + std::to_string(fmax) + " above Nyquist " +
                      std::to_string(sample_rate / 2.0));
  if (n_mels < 1) throw ConfigError("mel_filterbank: n_mels must be positive");

  int bins = n_fft / 2 + 1;
  double mel_lo = hz_to_mel(fmin);
  double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / static_cast<double>(n_mels + 1));

  std::vector<double> fb(static_cast<size_t>(n_mels) * bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    double f0 = edges[static_cast<size_t>(m)];
    double f1 = edges[static_cast<size_t>(m) + 1];
    double f2 = edges[static_cast<size_t>(m) + 2];
    bool nonzero = false;
    for (int k = 0; k < bins; ++k) {
      double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > f0 && f < f1)
        w = (f - f0) / (f1 - f0);
      else if (f >= f1 && f <= f2 && f2 > f1)
        w = (f2 - f) / (f2 - f1);
      if (w > 0.0) {
        fb[static_cast<size_t>(m) * bins + k] = w;
        nonzero = true;
      }
    }
    if (!nonzero)
      throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                        " has empty support; n_mels " + std::to_string(n_mels) +
                        " too large for fft size " + std::to_string(n_fft));
  }
  return fb;
}

LogMelFeature log_mel(const AudioClip& clip) {
  AudioClip canon =
      clip.sample_rate == kCanonicalRate ? clip : resample_linear(clip, kCanonicalRate);
  Spectrogram spec = stft(canon);
  auto fb = mel_filterbank(kCanonicalRate);

  LogMelFeature out;
  out.frames = spec.frames;
  out.mel_bins = kMelBins;
  out.values.resize(static_cast<size_t>(spec.frames * kMelBins));

  std::vector<double> power(static_cast<size_t>(spec.bins));
  for (int64_t t = 0; t < spec.frames; ++t) {
    for (int64_t k = 0; k < spec.bins; ++k) power[static_cast<size_t>(k)] = std::norm(spec.at(t, k));
    for (int m = 0; m < kMelBins; ++m) {
      const double* row = fb.data() + static_cast<size_t>(m) * spec.bins;
      double acc = 0.0;
      for (int64_t k = 0; k < spec.bins; ++k) acc += row[k] * power[static_cast<size_t>(k)];
      out.values[static_cast<size_t>(t * kMelBins + m)] =
          static_cast<float>(std::log(std::max(acc, kLogFloor)));
    }
  }
  return out;
}

void save_feature(const std::string& path, const LogMelFeature& feature) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("feature cache: cannot write " + path);
  out.write("ERGLFEAT", 8);
  uint16_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 2);
  auto t = static_cast<uint32_t>(feature.frames);
  auto b = static_cast<uint32_t>(feature.mel_bins);
  out.write(reinterpret_cast<const char*>(&t), 4);
  out.write(reinterpret_cast<const char*>(&b), 4);
  out.write(reinterpret_cast<const char*>(feature.values.data()),
            static_cast<std::streamsize>(feature.values.size() * sizeof(float)));
}

LogMelFeature load_feature(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("feature cache: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::strncmp(magic, "ERGLFEAT", 8) != 0)
    throw FormatError("feature cache: bad magic in " + path);
  uint16_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 2);
  if (version != 1)
    throw FormatError("feature cache: unsupported version " + std::to_string(version) + " in " +
                      path);
  uint32_t t = 0, b = 0;
  in.read(reinterpret_cast<char*>(&t), 4);
  in.read(reinterpret_cast<char*>(&b), 4);
  if (!in) throw FormatError("feature cache: truncated header in " + path);
  LogMelFeature feature;
  feature.frames = t;
  feature.mel_bins = b;
  feature.values.resize(static_cast<size_t>(t) * b);
  in.read(reinterpret_cast<char*>(feature.values.data()),
          static_cast<std::streamsize>(feature.values.size() * sizeof(float)));
  if (!in) throw FormatError("feature cache: truncated payload in " + path);
  return feature;
}

}  // namespace ergl
