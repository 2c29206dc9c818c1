#pragma once

#include <vector>

#include "ergl/backbone.hpp"
#include "ergl/gcn.hpp"

namespace ergl {

// The full pipeline: log-mel batch -> backbone -> MEL edges -> gated GCN ->
// scene prediction, with per-event probabilities along the way.
template <typename S>
class ErglModel {
 public:
  ErglModel() = default;

  ErglModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    backbone.init(cfg_, rng);
    mel.init(cfg_, rng);
    gcn.init(cfg_, rng);
  }

  struct Forward {
    Graph<S> graph;                 // G^0 with MEL edges and event probabilities
    ad::Tensor<S> event_probs;      // [B, n]
    ScenePrediction<S> scene;       // logits / probabilities / argmax
  };

  // features: [B, T, mel_bins]
  Forward forward(const ad::Tensor<S>& features, bool training) {
    auto tokens = backbone.conv_stack(features, training);
    auto joint = backbone.joint_representation(tokens);
    auto node_tokens = backbone.event_tokens(joint);

    std::vector<ad::Tensor<S>> vs, ps;
    vs.reserve(node_tokens.size());
    ps.reserve(node_tokens.size());
    for (size_t i = 0; i < node_tokens.size(); ++i) {
      auto pooled = backbone.pool_and_predict(node_tokens[i], static_cast<int>(i));
      vs.push_back(ad::reshape(pooled.v, {pooled.v.dim(0), 1, pooled.v.dim(1)}));
      ps.push_back(pooled.p);
    }

    Forward out;
    out.event_probs = ad::concat(ps, 1);  // [B, n]
    out.graph.node_feats = ad::concat(vs, 1);
    out.graph.edge_feats = mel.edge_tensor(mel.scene_aware(node_tokens));
    out.graph.event_probs = out.event_probs;
    out.graph.layer_index = 0;
    out.scene = gcn.forward(out.graph, training);
    return out;
  }

  ParamRegistry<S> registry() const {
    ParamRegistry<S> reg;
    backbone.collect("backbone", reg);
    mel.collect("mel", reg);
    gcn.collect("gcn", reg);
    return reg;
  }

  const ModelConfig& config() const { return cfg_; }

  // Casts every parameter and buffer to a model of a different precision.
  template <typename T>
  ErglModel<T> cast() const {
    Rng dummy(0);
    ErglModel<T> out(cfg_, dummy);
    auto src = registry();
    auto dst = out.registry();
    for (size_t i = 0; i < src.params.size(); ++i) {
      auto cast_t = src.params[i].tensor.template cast<T>();
      dst.params[i].tensor.values() = cast_t.values();
    }
    for (size_t i = 0; i < src.buffers.size(); ++i) {
      auto cast_t = src.buffers[i].tensor.template cast<T>();
      dst.buffers[i].tensor.values() = cast_t.values();
    }
    return out;
  }

  EventBackbone<S> backbone;
  MelModule<S> mel;
  GatedGcn<S> gcn;

 private:
  ModelConfig cfg_;
};

}  // namespace ergl
