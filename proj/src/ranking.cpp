#include "ergl/ranking.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ergl {

std::vector<double> accumulate_scores(std::vector<PseudoLabelVector> labels) {
  if (labels.empty()) throw InputError("accumulate: empty pseudo-label stream");
  for (const auto& l : labels)
    if (static_cast<int>(l.y.size()) != kPseudoLabelDim)
      throw FormatError("accumulate: clip '" + l.clip_id + "' has " + std::to_string(l.y.size()) +
                        " components, expected " + std::to_string(kPseudoLabelDim));

  std::sort(labels.begin(), labels.end(),
            [](const PseudoLabelVector& a, const PseudoLabelVector& b) {
              return a.clip_id < b.clip_id;
            });

  std::vector<std::vector<double>> level(labels.size());
  for (size_t i = 0; i < labels.size(); ++i)
    level[i].assign(labels[i].y.begin(), labels[i].y.end());

  // Pairwise reduction; an odd tail element is carried up unchanged.
  while (level.size() > 1) {
    std::vector<std::vector<double>> next;
    next.reserve((level.size() + 1) / 2);
    for (size_t i = 0; i + 1 < level.size(); i += 2) {
      std::vector<double> s(static_cast<size_t>(kPseudoLabelDim));
      for (int k = 0; k < kPseudoLabelDim; ++k)
        s[static_cast<size_t>(k)] = level[i][static_cast<size_t>(k)] + level[i + 1][static_cast<size_t>(k)];
      next.push_back(std::move(s));
    }
    if (level.size() % 2 == 1) next.push_back(std::move(level.back()));
    level = std::move(next);
  }
  return level[0];
}

EventVocabulary select_top_n(const std::vector<double>& scores, int n,
                             const std::vector<std::pair<int, std::string>>* names) {
  if (static_cast<int>(scores.size()) != kPseudoLabelDim)
    throw FormatError("select_top_n: score vector has " + std::to_string(scores.size()) +
                      " components, expected " + std::to_string(kPseudoLabelDim));
  if (n < 1 || n > kPseudoLabelDim)
    throw ConfigError("select_top_n: n=" + std::to_string(n) + " outside [1, " +
                      std::to_string(kPseudoLabelDim) + "]");

  std::vector<int> order(static_cast<size_t>(kPseudoLabelDim));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
      return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    return a < b;
  });

  EventVocabulary vocab;
  vocab.entries.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    VocabEntry e;
    e.index = order[static_cast<size_t>(i)];
    e.score = scores[static_cast<size_t>(e.index)];
    e.name = "event_" + std::to_string(e.index);
    if (names)
      for (const auto& [idx, nm] : *names)
        if (idx == e.index) e.name = nm;
    vocab.entries.push_back(std::move(e));
  }
  return vocab;
}

std::vector<float> project_labels(const PseudoLabelVector& label, const EventVocabulary& vocab) {
  if (static_cast<int>(label.y.size()) != kPseudoLabelDim)
    throw FormatError("project_labels: clip '" + label.clip_id + "' has " +
                      std::to_string(label.y.size()) + " components");
  std::vector<float> out;
  out.reserve(vocab.entries.size());
  for (const auto& e : vocab.entries) out.push_back(label.y[static_cast<size_t>(e.index)]);
  return out;
}

std::vector<PseudoLabelVector> load_pseudo_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("pseudo labels: cannot open " + path);
  std::vector<PseudoLabelVector> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string field;
    if (!std::getline(ss, field, ',') || field.empty())
      throw FormatError(path + ":" + std::to_string(lineno) + ": missing clip_id");
    PseudoLabelVector rec;
    rec.clip_id = field;
    rec.y.assign(kPseudoLabelDim, 0.0f);
    while (std::getline(ss, field, ',')) {
      if (field.empty()) continue;
      size_t colon = field.find(':');
      if (colon == std::string::npos)
        throw FormatError(path + ":" + std::to_string(lineno) + ": expected index:prob, got '" +
                          field + "'");
      int idx;
      double val;
      try {
        idx = std::stoi(field.substr(0, colon));
        val = std::stod(field.substr(colon + 1));
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": bad pair '" + field + "'");
      }
      if (idx < 0 || idx >= kPseudoLabelDim)
        throw FormatError(path + ":" + std::to_string(lineno) + ": index " + std::to_string(idx) +
                          " outside [0, " + std::to_string(kPseudoLabelDim) + ")");
      if (val < 0.0 || val > 1.0)
        throw FormatError(path + ":" + std::to_string(lineno) + ": probability " +
                          std::to_string(val) + " outside [0, 1]");
      rec.y[static_cast<size_t>(idx)] = static_cast<float>(val);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_pseudo_labels_csv(const std::string& path, const std::vector<PseudoLabelVector>& labels) {
  std::ofstream out(path);
  if (!out) throw InputError("pseudo labels: cannot write " + path);
  out.precision(9);
  for (const auto& rec : labels) {
    out << rec.clip_id;
    for (int i = 0; i < kPseudoLabelDim; ++i)
      if (rec.y[static_cast<size_t>(i)] != 0.0f) out << "," << i << ":" << rec.y[static_cast<size_t>(i)];
    out << "\n";
  }
}

PseudoLabelVector load_pseudo_label_binary(const std::string& path, const std::string& clip_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("pseudo labels: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::strncmp(magic, "ERGLPLBL", 8) != 0)
    throw FormatError("pseudo labels: bad magic in " + path);
  uint16_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 2);
  if (version != 1)
    throw FormatError("pseudo labels: unsupported version " + std::to_string(version) + " in " + path);
  PseudoLabelVector rec;
  rec.clip_id = clip_id;
  rec.y.resize(kPseudoLabelDim);
  in.read(reinterpret_cast<char*>(rec.y.data()),
          static_cast<std::streamsize>(rec.y.size() * sizeof(float)));
  if (!in) throw FormatError("pseudo labels: truncated payload in " + path);
  return rec;
}

void save_pseudo_label_binary(const std::string& path, const std::vector<float>& y) {
  if (static_cast<int>(y.size()) != kPseudoLabelDim)
    throw FormatError("pseudo labels: vector has " + std::to_string(y.size()) + " components");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("pseudo labels: cannot write " + path);
  out.write("ERGLPLBL", 8);
  uint16_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 2);
  out.write(reinterpret_cast<const char*>(y.data()),
            static_cast<std::streamsize>(y.size() * sizeof(float)));
}

PseudoLabelVector load_pseudo_label_for(const std::string& path, const std::string& clip_id) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw InputError("pseudo labels: cannot open " + path);
    char magic[8] = {0};
    probe.read(magic, 8);
    if (probe && std::strncmp(magic, "ERGLPLBL", 8) == 0)
      return load_pseudo_label_binary(path, clip_id);
  }
  auto all = load_pseudo_labels_csv(path);
  for (auto& rec : all)
    if (rec.clip_id == clip_id) return std::move(rec);
  throw FormatError("pseudo labels: clip '" + clip_id + "' not found in " + path);
}

std::string vocabulary_to_json(const EventVocabulary& vocab) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : vocab.entries)
    arr.push_back({{"index", e.index}, {"name", e.name}, {"score", e.score}});
  return arr.dump(2);
}

EventVocabulary vocabulary_from_json(const std::string& text) {
  EventVocabulary vocab;
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocabulary: bad JSON: ") + e.what());
  }
  if (!arr.is_array()) throw FormatError("vocabulary: expected a JSON array");
  for (const auto& item : arr) {
    VocabEntry e;
    e.index = item.at("index").get<int>();
    e.name = item.value("name", "event_" + std::to_string(e.index));
    e.score = item.value("score", 0.0);
    vocab.entries.push_back(std::move(e));
  }
  return vocab;
}

}  // namespace ergl
