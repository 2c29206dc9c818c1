#pragma once

#include <string>
#include <vector>

#include "ergl/ranking.hpp"

namespace ergl {

// A node is active when its event probability reaches the threshold
// (boundary inclusive: exactly 0.1 is active).
inline constexpr double kActivityThreshold = 0.1;

struct GraphExportNode {
  int slot = 0;         // position in the vocabulary
  int event_index = 0;  // position in the 527-dim label space
  std::string name;
  double probability = 0;
  bool active = false;
  double x = 0, y = 0;  // circular layout hint
};

struct GraphExportEdge {
  int src = 0, dst = 0;   // vocabulary slots
  double mean_weight = 0; // mean of the multi-dimensional edge vector
};

// Rendering-rule view of one clip's event-relational graph: nodes carry the
// activity flag, edges between two inactive nodes are dropped, and each edge
// is summarized by the mean of its vector.
struct GraphExport {
  std::vector<GraphExportNode> nodes;
  std::vector<GraphExportEdge> edges;

  // event_probs: n values; edge_means: n*n values in row-major (src, dst).
  static GraphExport build(const std::vector<double>& event_probs,
                           const std::vector<double>& edge_means, const EventVocabulary& vocab);

  std::string to_json() const;
  std::string to_dot() const;
};

}  // namespace ergl
