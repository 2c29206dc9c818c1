#include "ergl/graph_export.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace ergl {

GraphExport GraphExport::build(const std::vector<double>& event_probs,
                               const std::vector<double>& edge_means,
                               const EventVocabulary& vocab) {
  auto n = static_cast<size_t>(vocab.n());
  if (event_probs.size() != n)
    throw ContractError("graph export: " + std::to_string(event_probs.size()) +
                        " probabilities for " + std::to_string(n) + " vocabulary events");
  if (edge_means.size() != n * n)
    throw ContractError("graph export: expected " + std::to_string(n * n) + " edge means, got " +
                        std::to_string(edge_means.size()));

  GraphExport g;
  constexpr double kTau = 6.28318530717958647692;
  for (size_t i = 0; i < n; ++i) {
    GraphExportNode node;
    node.slot = static_cast<int>(i);
    node.event_index = vocab.entries[i].index;
    node.name = vocab.entries[i].name;
    node.probability = event_probs[i];
    node.active = event_probs[i] >= kActivityThreshold;
    node.x = std::cos(kTau * static_cast<double>(i) / static_cast<double>(n));
    node.y = std::sin(kTau * static_cast<double>(i) / static_cast<double>(n));
    g.nodes.push_back(std::move(node));
  }
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      if (!g.nodes[i].active && !g.nodes[j].active) continue;
      GraphExportEdge e;
      e.src = static_cast<int>(i);
      e.dst = static_cast<int>(j);
      e.mean_weight = edge_means[i * n + j];
      g.edges.push_back(e);
    }
  return g;
}

std::string GraphExport::to_json() const {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes)
    j["nodes"].push_back({{"slot", n.slot},
                          {"event_index", n.event_index},
                          {"name", n.name},
                          {"probability", n.probability},
                          {"active", n.active},
                          {"layout", {{"x", n.x}, {"y", n.y}}}});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : edges)
    j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"mean_weight", e.mean_weight}});
  return j.dump(2);
}

std::string GraphExport::to_dot() const {
  double max_abs = 0.0;
  for (const auto& e : edges) max_abs = std::max(max_abs, std::fabs(e.mean_weight));
  if (max_abs == 0.0) max_abs = 1.0;

  std::ostringstream out;
  out << "digraph erg {\n";
  out << "  node [shape=circle, style=filled, fixedsize=true];\n";
  for (const auto& n : nodes) {
    double width = 0.3 + 1.2 * n.probability;
    out << "  n" << n.slot << " [label=\"" << n.name << "\", width=" << width
        << ", fillcolor=" << (n.active ? "\"#7fc97f\"" : "\"#dddddd\"") << "];\n";
  }
  for (const auto& e : edges) {
    double pen = 0.5 + 4.0 * std::fabs(e.mean_weight) / max_abs;
    out << "  n" << e.src << " -> n" << e.dst << " [penwidth=" << pen << "];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace ergl
