#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ergl/errors.hpp"

namespace ergl {

inline constexpr int kPseudoLabelDim = 527;

// 527-dim soft event probabilities for one clip.
struct PseudoLabelVector {
  std::string clip_id;
  std::vector<float> y;
};

struct VocabEntry {
  int index = 0;  // position in the 527-dim label space
  std::string name;
  double score = 0.0;  // accumulated probability mass over the training set
};

// Top-n event vocabulary, sorted by descending score, ties by ascending index.
struct EventVocabulary {
  std::vector<VocabEntry> entries;

  int n() const { return static_cast<int>(entries.size()); }
  std::vector<int> indices() const {
    std::vector<int> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.index);
    return out;
  }
};

// Componentwise sum over clips. Clips are first brought into canonical order
// (ascending clip_id) and reduced by pairwise summation at 64-bit, so the
// result is bitwise independent of input order.
std::vector<double> accumulate_scores(std::vector<PseudoLabelVector> labels);

// The n largest-score indices. Optional names map indices to display names;
// unnamed events get "event_<index>".
EventVocabulary select_top_n(const std::vector<double>& scores, int n,
                             const std::vector<std::pair<int, std::string>>* names = nullptr);

// Gathers the vocabulary components of y, in vocabulary order.
std::vector<float> project_labels(const PseudoLabelVector& label, const EventVocabulary& vocab);

// Sparse CSV: one record per line, `clip_id,i0:p0,i1:p1,...` (absent index
// means 0). Throws FormatError with the line number on malformed input.
std::vector<PseudoLabelVector> load_pseudo_labels_csv(const std::string& path);
void save_pseudo_labels_csv(const std::string& path, const std::vector<PseudoLabelVector>& labels);

// Dense binary, one clip per file: magic "ERGLPLBL", version u16, 527 f32 LE.
PseudoLabelVector load_pseudo_label_binary(const std::string& path, const std::string& clip_id);
void save_pseudo_label_binary(const std::string& path, const std::vector<float>& y);

// Dispatch on the file's magic: binary record or CSV lookup by clip_id.
PseudoLabelVector load_pseudo_label_for(const std::string& path, const std::string& clip_id);

std::string vocabulary_to_json(const EventVocabulary& vocab);
EventVocabulary vocabulary_from_json(const std::string& text);

}  // namespace ergl
