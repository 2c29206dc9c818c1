#pragma once

#include <string>
#include <vector>

#include "ergl/features.hpp"
#include "ergl/ranking.hpp"

namespace ergl {

struct ManifestRow {
  std::string clip_id;
  std::string wav_path;
  std::string scene_label;
  std::string split;  // train | val | test
  std::string pseudo_label_ref;
};

// CSV with header clip_id,wav_path,scene_label,split,pseudo_label_ref.
// clip_ids must be unique and every train row needs a pseudo_label_ref.
struct DatasetManifest {
  std::vector<ManifestRow> rows;

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;

  std::vector<const ManifestRow*> split(const std::string& name) const;
};

struct LoadedClip {
  std::string clip_id;
  LogMelFeature feature;
  int scene_index = -1;
  std::vector<float> event_target;  // n-dim, train rows only
  std::string split;
};

// Fully materialized training data: features, vocabulary, projected targets.
struct LoadedDataset {
  std::vector<std::string> scene_labels;  // sorted distinct labels
  EventVocabulary vocab;
  std::vector<LoadedClip> clips;
  std::vector<int> train_idx, val_idx, test_idx;
  int64_t frames = 0;  // common frame count after cropping to the minimum T

  const std::vector<int>& split_indices(const std::string& name) const;
};

// Reads wavs, extracts features, accumulates train pseudo labels, selects the
// top-n vocabulary and projects per-clip targets. Relative paths in the
// manifest resolve against base_dir. feature_cache_dir, when non-empty, holds
// ERGLFEAT files keyed by clip_id.
LoadedDataset load_dataset(const DatasetManifest& manifest, const std::string& base_dir,
                           int n_events,
                           const std::vector<std::pair<int, std::string>>* event_names = nullptr,
                           const std::string& feature_cache_dir = "");

// {index -> name} list from a JSON object file like {"17": "speech"}.
std::vector<std::pair<int, std::string>> load_event_names(const std::string& path);

}  // namespace ergl
