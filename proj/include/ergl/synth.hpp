#pragma once

#include <cstdint>
#include <string>

namespace ergl {

// Synthetic 10-scene dataset: tone/noise/chirp "events" mixed per scene, with
// pseudo labels planted at fixed indices of the 527-dim label space.
//
// Scenes 0-2 share identical per-event activity (four tones, each active in
// half of the clip's segments) and differ only in which tones sound together,
// so telling them apart requires pairwise temporal relations. Scenes 3-9 are
// separable from per-event activity alone.
struct SynthOptions {
  uint64_t seed = 0;
  int clips_per_scene = 20;   // split 70/10/20 -> 14 train, 2 val, 4 test
  double clip_seconds = 2.0;
  int sample_rate = 32000;
};

struct SynthSummary {
  std::string manifest_path;
  std::string labels_path;
  std::string event_names_path;
  int clips = 0;
  int scenes = 10;
};

// Number of planted event indices (vocabulary ground truth for tests).
inline constexpr int kSynthEventCount = 10;
extern const int kSynthEventIndices[kSynthEventCount];

SynthSummary gen_synth_dataset(const std::string& out_dir, const SynthOptions& opts = {});

}  // namespace ergl
