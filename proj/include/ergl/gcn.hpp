#pragma once

#include <vector>

#include "ergl/edges.hpp"

namespace ergl {

inline constexpr double kGateEps = 1e-6;

// One residual gated graph convolution layer:
//   e'_{ij} = e_{ij} + ReLU(Norm(We e_{ij} + Ws h_i + Wd h_j))
//   eta_{ij} = sigma(e'_{ij}) / (sum_j' sigma(e'_{ij'}) + eps)
//   h'_i = h_i + ReLU(Norm(Wh h_i + sum_j eta_{ij} * (Wm h_j)))
template <typename S>
struct GcnLayer {
  ad::Tensor<S> edge_w;  // applied to the edge feature itself
  ad::Tensor<S> src_w;   // applied to h_i
  ad::Tensor<S> dst_w;   // applied to h_j
  ad::Tensor<S> self_w;  // node self term
  ad::Tensor<S> msg_w;   // neighbor message term
  BatchNorm<S> edge_norm, node_norm;

  void init(int64_t d, Rng& rng, double bn_momentum = 0.9, double bn_eps = 1e-5) {
    edge_w = kaiming_uniform<S>({d, d}, d, rng);
    src_w = kaiming_uniform<S>({d, d}, d, rng);
    dst_w = kaiming_uniform<S>({d, d}, d, rng);
    self_w = kaiming_uniform<S>({d, d}, d, rng);
    msg_w = kaiming_uniform<S>({d, d}, d, rng);
    edge_norm.init(d);
    node_norm.init(d);
    edge_norm.momentum = node_norm.momentum = static_cast<S>(bn_momentum);
    edge_norm.eps = node_norm.eps = static_cast<S>(bn_eps);
  }

  Graph<S> forward(const Graph<S>& g, bool training) {
    int64_t nb = g.batch(), n = g.nodes(), d = g.dim();
    const auto& h = g.node_feats;
    const auto& e = g.edge_feats;

    // edge update; Norm runs over the edge population (B*n^2 rows)
    auto h_src = ad::expand(h, 2, n);  // [B, n, n, d], (i, j) -> h_i
    auto h_dst = ad::expand(h, 1, n);  // [B, n, n, d], (i, j) -> h_j
    auto pre_e =
        ad::add(ad::add(ad::linear(e, edge_w), ad::linear(h_src, src_w)), ad::linear(h_dst, dst_w));
    auto norm_e = edge_norm.forward(ad::reshape(pre_e, {nb * n * n, d}), training);
    auto e_hat = ad::add(e, ad::reshape(ad::relu(norm_e), {nb, n, n, d}));

    // gate, normalized over the neighbor axis j
    auto sig = ad::sigmoid(e_hat);
    auto denom = ad::add_scalar(ad::sum_axis(sig, 2), static_cast<S>(kGateEps));  // [B, n, d]
    auto eta = ad::div(sig, ad::expand(denom, 2, n));                             // [B, n, n, d]

    // node update; Norm runs over the node population (B*n rows)
    auto msg = ad::sum_axis(ad::mul(eta, ad::expand(ad::linear(h, msg_w), 1, n)), 2);
    auto pre_h = ad::add(ad::linear(h, self_w), msg);
    auto norm_h = node_norm.forward(ad::reshape(pre_h, {nb * n, d}), training);
    auto h_hat = ad::add(h, ad::reshape(ad::relu(norm_h), {nb, n, d}));

    Graph<S> out;
    out.node_feats = h_hat;
    out.edge_feats = e_hat;
    out.event_probs = g.event_probs;
    out.layer_index = g.layer_index + 1;
    return out;
  }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    reg.add_param(prefix + ".edge_w", edge_w);
    reg.add_param(prefix + ".src_w", src_w);
    reg.add_param(prefix + ".dst_w", dst_w);
    reg.add_param(prefix + ".self_w", self_w);
    reg.add_param(prefix + ".msg_w", msg_w);
    edge_norm.collect(prefix + ".edge_norm", reg);
    node_norm.collect(prefix + ".node_norm", reg);
  }
};

template <typename S>
struct ScenePrediction {
  ad::Tensor<S> logits;         // [B, classes]
  ad::Tensor<S> probabilities;  // softmax of logits
  std::vector<int64_t> predicted;

  static ScenePrediction from_logits(const ad::Tensor<S>& logits) {
    ScenePrediction out;
    out.logits = logits;
    out.probabilities = ad::softmax(logits, 1);
    int64_t nb = logits.dim(0), nc = logits.dim(1);
    out.predicted.resize(static_cast<size_t>(nb));
    for (int64_t b = 0; b < nb; ++b) {
      int64_t best = 0;
      for (int64_t c = 1; c < nc; ++c)
        if (logits.values()[b * nc + c] > logits.values()[b * nc + best]) best = c;
      out.predicted[static_cast<size_t>(b)] = best;
    }
    return out;
  }
};

// U gated layers, concat readout over nodes in vocabulary order, linear scene
// classifier.
template <typename S>
struct GatedGcn {
  std::vector<GcnLayer<S>> layers;
  Linear<S> scene_cls;  // n*d -> classes; zero-initialized
  int depth = 0;

  void init(const ModelConfig& cfg, Rng& rng) {
    depth = cfg.gcn_layers;
    layers.resize(static_cast<size_t>(depth));
    for (auto& l : layers) l.init(cfg.node_dim, rng, cfg.bn_momentum, cfg.bn_eps);
    scene_cls.init(static_cast<int64_t>(cfg.n_events) * cfg.node_dim, cfg.scene_classes, rng,
                   /*zero=*/true);
  }

  Graph<S> gcn_layer(const Graph<S>& g, int layer, bool training) {
    return layers[static_cast<size_t>(layer)].forward(g, training);
  }

  // Node features concatenated in vocabulary order; only valid on G^U.
  ad::Tensor<S> readout(const Graph<S>& g) const {
    if (g.layer_index != depth)
      throw ContractError("readout: graph is at layer " + std::to_string(g.layer_index) +
                          ", expected " + std::to_string(depth));
    return ad::reshape(g.node_feats, {g.batch(), g.nodes() * g.dim()});
  }

  ScenePrediction<S> classify(const ad::Tensor<S>& readout_vec) const {
    return ScenePrediction<S>::from_logits(scene_cls.forward(readout_vec));
  }

  ScenePrediction<S> forward(const Graph<S>& g0, bool training) {
    Graph<S> g = g0;
    for (int l = 0; l < depth; ++l) g = gcn_layer(g, l, training);
    return classify(readout(g));
  }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".layer" + std::to_string(i), reg);
    scene_cls.collect(prefix + ".scene_cls", reg);
  }
};

}  // namespace ergl
