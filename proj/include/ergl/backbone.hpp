#pragma once

#include <string>
#include <vector>

#include "ergl/layers.hpp"

namespace ergl {

struct ModelConfig {
  int n_events = 25;                                   // n, graph node count
  int gcn_layers = 2;                                  // U
  int node_dim = 64;                                   // d
  int joint_dim = 2048;                                // shared FC width
  std::vector<int> conv_channels = {64, 128, 256, 512};
  int mel_bins = 64;
  int scene_classes = 10;
  bool use_ncm = true;
  bool use_nnm = true;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  void validate() const {
    if (node_dim != 64) throw ConfigError("model: node_dim must be 64");
    if (joint_dim != 2048) throw ConfigError("model: joint_dim must be 2048");
    if (mel_bins != 64) throw ConfigError("model: mel_bins must be 64");
    if (n_events < 1) throw ConfigError("model: n_events must be at least 1");
    if (gcn_layers < 1) throw ConfigError("model: gcn_layers must be at least 1");
    if (scene_classes < 2) throw ConfigError("model: scene_classes must be at least 2");
    if (conv_channels.empty()) throw ConfigError("model: conv_channels must not be empty");
    if (bn_momentum < 0 || bn_momentum >= 1) throw ConfigError("model: bn_momentum must be in [0, 1)");
  }
};

// conv -> bn -> relu, twice, then 2x2 average pooling.
template <typename S>
struct ConvBlock {
  Conv3x3<S> conv1, conv2;
  BatchNorm<S> bn1, bn2;

  void init(int64_t in, int64_t out, Rng& rng, double bn_momentum, double bn_eps) {
    conv1.init(in, out, rng);
    bn1.init(out);
    conv2.init(out, out, rng);
    bn2.init(out);
    bn1.momentum = bn2.momentum = static_cast<S>(bn_momentum);
    bn1.eps = bn2.eps = static_cast<S>(bn_eps);
  }

  ad::Tensor<S> forward(const ad::Tensor<S>& x, bool training) {
    auto h = ad::relu(bn1.forward(conv1.forward(x), training));
    h = ad::relu(bn2.forward(conv2.forward(h), training));
    return ad::avg_pool2d(h, 2);
  }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    conv1.collect(prefix + ".conv1", reg);
    bn1.collect(prefix + ".bn1", reg);
    conv2.collect(prefix + ".conv2", reg);
    bn2.collect(prefix + ".bn2", reg);
  }
};

// CNN encoder: log-mel in, n per-event token matrices plus event probabilities
// out. Token layout is [B, T', d] per event.
template <typename S>
struct EventBackbone {
  std::vector<ConvBlock<S>> blocks;
  Linear<S> joint;                    // C -> 2048
  std::vector<Linear<S>> heads;       // n independent 2048 -> 64
  std::vector<Linear<S>> event_cls;   // n independent 64 -> 1
  int n_events = 0;

  void init(const ModelConfig& cfg, Rng& rng) {
    n_events = cfg.n_events;
    blocks.resize(cfg.conv_channels.size());
    int64_t in = 1;
    for (size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].init(in, cfg.conv_channels[i], rng, cfg.bn_momentum, cfg.bn_eps);
      in = cfg.conv_channels[i];
    }
    joint.init(in, cfg.joint_dim, rng);
    heads.resize(static_cast<size_t>(cfg.n_events));
    event_cls.resize(static_cast<size_t>(cfg.n_events));
    for (auto& h : heads) h.init(cfg.joint_dim, cfg.node_dim, rng);
    for (auto& c : event_cls) c.init(cfg.node_dim, 1, rng);
  }

  // features [B, T, mel] -> tokens [B, T', C]; frequency fully pooled.
  ad::Tensor<S> conv_stack(const ad::Tensor<S>& features, bool training) {
    if (features.ndim() != 3)
      throw DimensionError("conv_stack: expects [batch, frames, mel], got " +
                           ad::shape_str(features.shape()));
    int64_t t = features.dim(1), f = features.dim(2);
    for (size_t i = 0; i < blocks.size(); ++i) {
      t /= 2;
      f /= 2;
      if (t < 1 || f < 1)
        throw ConfigError("conv_stack: input of " + std::to_string(features.dim(1)) +
                          " frames does not survive " + std::to_string(blocks.size()) +
                          " pooling stages");
    }
    auto x = ad::reshape(features, {features.dim(0), 1, features.dim(1), features.dim(2)});
    for (auto& block : blocks) x = block.forward(x, training);
    auto pooled = ad::mean_axis(x, 3);            // [B, C, T']
    return ad::permute(pooled, {0, 2, 1});        // [B, T', C]
  }

  ad::Tensor<S> joint_representation(const ad::Tensor<S>& tokens) const {
    return ad::relu(joint.forward(tokens));
  }

  // n independent per-event token matrices, each [B, T', d].
  std::vector<ad::Tensor<S>> event_tokens(const ad::Tensor<S>& joint_repr) const {
    std::vector<ad::Tensor<S>> out;
    out.reserve(heads.size());
    for (const auto& head : heads) out.push_back(head.forward(joint_repr));
    return out;
  }

  // v_i = temporal mean; p_i = sigmoid(w_i . v_i + b_i).
  struct Pooled {
    ad::Tensor<S> v;  // [B, d]
    ad::Tensor<S> p;  // [B, 1]
  };
  Pooled pool_and_predict(const ad::Tensor<S>& tokens, int event_index) const {
    auto v = ad::mean_axis(tokens, 1);
    auto p = ad::sigmoid(event_cls[static_cast<size_t>(event_index)].forward(v));
    return {v, p};
  }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".block" + std::to_string(i), reg);
    joint.collect(prefix + ".joint", reg);
    for (size_t i = 0; i < heads.size(); ++i)
      heads[i].collect(prefix + ".head" + std::to_string(i), reg);
    for (size_t i = 0; i < event_cls.size(); ++i)
      event_cls[i].collect(prefix + ".event_cls" + std::to_string(i), reg);
  }
};

}  // namespace ergl
