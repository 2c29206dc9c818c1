#pragma once

#include <string>
#include <vector>

#include "ergl/errors.hpp"

namespace ergl {

// PCM audio in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;
  std::string clip_id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads a RIFF WAV holding 16-bit PCM, mono or stereo (stereo is downmixed by
// averaging). Throws InputError / FormatError on anything else.
AudioClip read_wav(const std::string& path);

// 16-bit PCM mono writer; samples are clamped to [-1, 1].
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate);

// Linear-interpolation resampler; returns the clip unchanged when rates match.
AudioClip resample_linear(const AudioClip& clip, int target_rate);

}  // namespace ergl
