#include "ergl/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ergl/audio.hpp"

namespace fs = std::filesystem;

namespace ergl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base_dir) / p).string();
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("manifest: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "clip_id,wav_path,scene_label,split,pseudo_label_ref")
    throw FormatError(path + ":1: bad header '" + line +
                      "', expected clip_id,wav_path,scene_label,split,pseudo_label_ref");

  DatasetManifest manifest;
  std::set<std::string> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 5)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 5 fields, got " +
                        std::to_string(fields.size()));
    ManifestRow row{fields[0], fields[1], fields[2], fields[3], fields[4]};
    if (row.clip_id.empty())
      throw FormatError(path + ":" + std::to_string(lineno) + ": empty clip_id");
    if (!seen.insert(row.clip_id).second)
      throw FormatError(path + ":" + std::to_string(lineno) + ": duplicate clip_id '" +
                        row.clip_id + "'");
    if (row.split != "train" && row.split != "val" && row.split != "test")
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": split must be train/val/test, got '" + row.split + "'");
    if (row.split == "train" && row.pseudo_label_ref.empty())
      throw FormatError(path + ":" + std::to_string(lineno) + ": train clip '" + row.clip_id +
                        "' has no pseudo_label_ref");
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("manifest: cannot write " + path);
  out << "clip_id,wav_path,scene_label,split,pseudo_label_ref\n";
  for (const auto& r : rows)
    out << r.clip_id << "," << r.wav_path << "," << r.scene_label << "," << r.split << ","
        << r.pseudo_label_ref << "\n";
}

std::vector<const ManifestRow*> DatasetManifest::split(const std::string& name) const {
  std::vector<const ManifestRow*> out;
  for (const auto& r : rows)
    if (r.split == name) out.push_back(&r);
  return out;
}

const std::vector<int>& LoadedDataset::split_indices(const std::string& name) const {
  if (name == "train") return train_idx;
  if (name == "val") return val_idx;
  if (name == "test") return test_idx;
  throw ConfigError("dataset: unknown split '" + name + "'");
}

LoadedDataset load_dataset(const DatasetManifest& manifest, const std::string& base_dir,
                           int n_events,
                           const std::vector<std::pair<int, std::string>>* event_names,
                           const std::string& feature_cache_dir) {
  if (manifest.rows.empty()) throw InputError("dataset: manifest has no rows");

  LoadedDataset data;
  {
    std::set<std::string> labels;
    for (const auto& r : manifest.rows) labels.insert(r.scene_label);
    data.scene_labels.assign(labels.begin(), labels.end());
  }

  // vocabulary from training pseudo labels
  std::vector<PseudoLabelVector> train_labels;
  for (const auto& r : manifest.rows) {
    if (r.split != "train") continue;
    auto rec = load_pseudo_label_for(resolve(base_dir, r.pseudo_label_ref), r.clip_id);
    rec.clip_id = r.clip_id;
    train_labels.push_back(std::move(rec));
  }
  if (train_labels.empty()) throw InputError("dataset: no training rows in manifest");
  data.vocab = select_top_n(accumulate_scores(train_labels), n_events, event_names);

  std::map<std::string, const PseudoLabelVector*> by_id;
  for (const auto& rec : train_labels) by_id[rec.clip_id] = &rec;

  // features, parallel over clips
  data.clips.resize(manifest.rows.size());
  std::vector<std::string> errors(manifest.rows.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int64_t i = 0; i < static_cast<int64_t>(manifest.rows.size()); ++i) {
    const auto& row = manifest.rows[static_cast<size_t>(i)];
    auto& clip = data.clips[static_cast<size_t>(i)];
    try {
      clip.clip_id = row.clip_id;
      clip.split = row.split;
      bool cached = false;
      fs::path cache_file;
      if (!feature_cache_dir.empty()) {
        cache_file = fs::path(feature_cache_dir) / (row.clip_id + ".erglfeat");
        if (fs::exists(cache_file)) {
          clip.feature = load_feature(cache_file.string());
          cached = true;
        }
      }
      if (!cached) {
        auto audio = read_wav(resolve(base_dir, row.wav_path));
        audio.clip_id = row.clip_id;
        clip.feature = log_mel(audio);
        if (!feature_cache_dir.empty()) save_feature(cache_file.string(), clip.feature);
      }
    } catch (const Error& e) {
      errors[static_cast<size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw InputError("dataset: " + e);

  // scene indices, targets, split membership
  for (size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& row = manifest.rows[i];
    auto& clip = data.clips[i];
    auto it = std::lower_bound(data.scene_labels.begin(), data.scene_labels.end(), row.scene_label);
    clip.scene_index = static_cast<int>(it - data.scene_labels.begin());
    if (row.split == "train") {
      clip.event_target = project_labels(*by_id.at(row.clip_id), data.vocab);
      data.train_idx.push_back(static_cast<int>(i));
    } else if (row.split == "val") {
      data.val_idx.push_back(static_cast<int>(i));
    } else {
      data.test_idx.push_back(static_cast<int>(i));
    }
  }

  // batching needs a common frame count; crop everything to the minimum
  int64_t min_t = data.clips[0].feature.frames;
  for (const auto& c : data.clips) min_t = std::min(min_t, c.feature.frames);
  for (auto& c : data.clips) {
    if (c.feature.frames != min_t) {
      c.feature.values.resize(static_cast<size_t>(min_t * c.feature.mel_bins));
      c.feature.frames = min_t;
    }
  }
  data.frames = min_t;
  return data;
}

std::vector<std::pair<int, std::string>> load_event_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("event names: cannot open " + path);
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("event names: bad JSON in " + path + ": " + e.what());
  }
  if (!obj.is_object()) throw FormatError("event names: expected a JSON object in " + path);
  std::vector<std::pair<int, std::string>> out;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    int idx;
    try {
      idx = std::stoi(it.key());
    } catch (const std::exception&) {
      throw FormatError("event names: non-numeric index '" + it.key() + "' in " + path);
    }
    out.emplace_back(idx, it.value().template get<std::string>());
  }
  return out;
}

}  // namespace ergl
