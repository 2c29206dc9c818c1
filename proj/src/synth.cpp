#include "ergl/synth.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ergl/audio.hpp"
#include "ergl/dataset.hpp"
#include "ergl/ranking.hpp"
#include "ergl/rng.hpp"

namespace fs = std::filesystem;

namespace ergl {

// planted positions in the 527-dim pseudo-label space
const int kSynthEventIndices[kSynthEventCount] = {137, 300, 443, 17, 72, 205, 388, 451, 511, 62};

namespace {

constexpr double kTau = 6.28318530717958647692;
constexpr int kSegments = 8;

const char* kEventNames[kSynthEventCount] = {
    "tone_low", "tone_mid", "tone_high", "tone_vhigh", "chirp_up",
    "noise_band", "am_tone", "chirp_down", "click_train", "hum_low"};

// event amplitude while active
double event_amp(int ev) {
  if (ev <= 3) return 0.25;  // pairing tones
  return 0.4;
}

// one sample of event ev at time t (seconds); phases vary per clip
double event_sample(int ev, double t, const std::array<double, 4>& phase, double clip_len) {
  switch (ev) {
    case 0: return std::sin(kTau * 150.0 * t + phase[0]);
    case 1: return std::sin(kTau * 1300.0 * t + phase[0]);
    case 2: return std::sin(kTau * 4200.0 * t + phase[0]);
    case 3: return std::sin(kTau * 12000.0 * t + phase[0]);
    case 4: {  // rising chirp 400 -> 900 Hz over the clip
      double f0 = 400.0, f1 = 900.0;
      double k = (f1 - f0) / clip_len;
      return std::sin(kTau * (f0 * t + 0.5 * k * t * t) + phase[0]);
    }
    case 5: {  // band noise around 2-3 kHz from four incommensurate sines
      double s = 0.0;
      for (int i = 0; i < 4; ++i)
        s += std::sin(kTau * (2000.0 + 270.7 * i) * t + phase[static_cast<size_t>(i)]);
      return s * 0.5;
    }
    case 6:  // amplitude-modulated tone
      return std::sin(kTau * 6000.0 * t + phase[0]) * (0.55 + 0.45 * std::sin(kTau * 8.0 * t + phase[1]));
    case 7: {  // falling chirp 9 kHz -> 5 kHz
      double f0 = 9000.0, f1 = 5000.0;
      double k = (f1 - f0) / clip_len;
      return std::sin(kTau * (f0 * t + 0.5 * k * t * t) + phase[0]);
    }
    case 8: {  // click train at 12 Hz, short decaying bursts
      double period = 1.0 / 12.0;
      double dt = std::fmod(t + phase[0] / kTau * period, period);
      return dt < 0.004 ? std::exp(-dt * 900.0) * std::sin(kTau * 3000.0 * dt) : 0.0;
    }
    default:  // low hum
      return std::sin(kTau * 80.0 * t + phase[0]);
  }
}

struct EventActivity {
  bool segments[kSegments] = {false};
  double amp = 0.0;

  double fraction() const {
    int n = 0;
    for (bool b : segments) n += b ? 1 : 0;
    return static_cast<double>(n) / kSegments;
  }
};

// random subset of `count` segments
void pick_segments(EventActivity& act, int count, Rng& rng) {
  std::vector<int> order(kSegments);
  for (int i = 0; i < kSegments; ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);
  for (int i = 0; i < count; ++i) act.segments[order[static_cast<size_t>(i)]] = true;
}

// per-clip activity plan for all ten events
std::array<EventActivity, kSynthEventCount> plan_scene(int scene, Rng& rng) {
  std::array<EventActivity, kSynthEventCount> plan;
  if (scene <= 2) {
    // two tone pairs; group A plays in a random half of the segments,
    // group B in the complement, so every tone is active exactly half the time
    static const int kPairs[3][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}};
    EventActivity group_a;
    pick_segments(group_a, kSegments / 2, rng);
    const int* p = kPairs[scene];
    for (int k = 0; k < 2; ++k) {
      plan[static_cast<size_t>(p[k])].amp = event_amp(p[k]);
      plan[static_cast<size_t>(p[2 + k])].amp = event_amp(p[2 + k]);
      for (int s = 0; s < kSegments; ++s) {
        plan[static_cast<size_t>(p[k])].segments[s] = group_a.segments[s];
        plan[static_cast<size_t>(p[2 + k])].segments[s] = !group_a.segments[s];
      }
    }
  } else if (scene <= 8) {
    int dominant = 4 + (scene - 3);
    int secondary = 4 + (scene - 3 + 1) % 6;
    plan[static_cast<size_t>(dominant)].amp = event_amp(dominant);
    pick_segments(plan[static_cast<size_t>(dominant)], 6, rng);
    plan[static_cast<size_t>(secondary)].amp = 0.15;
    pick_segments(plan[static_cast<size_t>(secondary)], 3, rng);
  } else {
    for (int ev : {4, 5, 6}) {
      plan[static_cast<size_t>(ev)].amp = 0.25;
      pick_segments(plan[static_cast<size_t>(ev)], 4, rng);
    }
  }
  return plan;
}

}  // namespace

SynthSummary gen_synth_dataset(const std::string& out_dir, const SynthOptions& opts) {
  fs::create_directories(fs::path(out_dir) / "wav");

  int train_per_scene = (opts.clips_per_scene * 7) / 10;
  int val_per_scene = opts.clips_per_scene / 10;

  auto n_samples = static_cast<int64_t>(opts.clip_seconds * opts.sample_rate);
  int64_t seg_len = n_samples / kSegments;
  const int64_t ramp = std::min<int64_t>(320, seg_len / 4);

  Rng master(opts.seed);
  DatasetManifest manifest;
  std::vector<PseudoLabelVector> labels;

  for (int scene = 0; scene < 10; ++scene) {
    for (int k = 0; k < opts.clips_per_scene; ++k) {
      Rng clip_rng = master.fork(static_cast<uint64_t>(scene * 1000 + k));
      auto plan = plan_scene(scene, clip_rng);

      std::array<std::array<double, 4>, kSynthEventCount> phases;
      for (auto& ph : phases)
        for (auto& v : ph) v = clip_rng.uniform(0.0, kTau);

      std::vector<float> samples(static_cast<size_t>(n_samples), 0.0f);
      for (int ev = 0; ev < kSynthEventCount; ++ev) {
        const auto& act = plan[static_cast<size_t>(ev)];
        if (act.amp == 0.0) continue;
        for (int seg = 0; seg < kSegments; ++seg) {
          if (!act.segments[seg]) continue;
          int64_t lo = seg * seg_len;
          int64_t hi = std::min<int64_t>(lo + seg_len, n_samples);
          for (int64_t i = lo; i < hi; ++i) {
            double env = 1.0;
            if (i - lo < ramp) env = static_cast<double>(i - lo) / static_cast<double>(ramp);
            int64_t tail = hi - 1 - i;
            if (tail < ramp) env = std::min(env, static_cast<double>(tail) / static_cast<double>(ramp));
            double t = static_cast<double>(i) / opts.sample_rate;
            samples[static_cast<size_t>(i)] += static_cast<float>(
                act.amp * env * event_sample(ev, t, phases[static_cast<size_t>(ev)], opts.clip_seconds));
          }
        }
      }
      // low background noise everywhere
      for (auto& s : samples) s += static_cast<float>(clip_rng.normal() * 0.008);

      char id[64];
      std::snprintf(id, sizeof(id), "scene%d_clip%02d", scene, k);
      std::string clip_id(id);
      std::string wav_rel = "wav/" + clip_id + ".wav";
      write_wav((fs::path(out_dir) / wav_rel).string(), samples, opts.sample_rate);

      PseudoLabelVector rec;
      rec.clip_id = clip_id;
      rec.y.assign(kPseudoLabelDim, 0.0f);
      for (int ev = 0; ev < kSynthEventCount; ++ev) {
        const auto& act = plan[static_cast<size_t>(ev)];
        if (act.amp == 0.0) continue;
        double y = act.fraction() * std::min(1.0, act.amp / 0.4);
        rec.y[static_cast<size_t>(kSynthEventIndices[ev])] = static_cast<float>(y);
      }
      labels.push_back(std::move(rec));

      ManifestRow row;
      row.clip_id = clip_id;
      row.wav_path = wav_rel;
      row.scene_label = "scene" + std::to_string(scene);
      row.split = k < train_per_scene           ? "train"
                  : k < train_per_scene + val_per_scene ? "val"
                                                        : "test";
      row.pseudo_label_ref = "labels.csv";
      manifest.rows.push_back(std::move(row));
    }
  }

  SynthSummary summary;
  summary.clips = static_cast<int>(manifest.rows.size());
  summary.labels_path = (fs::path(out_dir) / "labels.csv").string();
  summary.manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  summary.event_names_path = (fs::path(out_dir) / "event_names.json").string();

  save_pseudo_labels_csv(summary.labels_path, labels);
  manifest.save(summary.manifest_path);

  nlohmann::json names;
  for (int ev = 0; ev < kSynthEventCount; ++ev)
    names[std::to_string(kSynthEventIndices[ev])] = kEventNames[ev];
  std::ofstream nf(summary.event_names_path);
  nf << names.dump(2) << "\n";

  return summary;
}

}  // namespace ergl
