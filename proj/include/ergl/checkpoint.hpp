#pragma once

#include <string>
#include <vector>

#include "ergl/model.hpp"
#include "ergl/ranking.hpp"
#include "ergl/train_config.hpp"

namespace ergl {

struct NamedBlob {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;
};

struct OptimSlot {
  std::string name;
  int64_t step = 0;
  std::vector<float> m, v;
};

// Versioned model persistence: magic "ERGLCKPT", config snapshot, vocabulary,
// scene labels, named f32 tensors (parameters and running stats), optional
// optimizer state. Parameters round-trip bitwise.
struct Checkpoint {
  TrainConfig config;
  EventVocabulary vocab;
  std::vector<std::string> scene_labels;
  std::vector<NamedBlob> tensors;
  bool has_optimizer = false;
  std::vector<OptimSlot> optimizer;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  template <typename S>
  static Checkpoint from_model(const ErglModel<S>& model, const TrainConfig& cfg,
                               const EventVocabulary& vocab,
                               const std::vector<std::string>& scene_labels) {
    Checkpoint ck;
    ck.config = cfg;
    ck.vocab = vocab;
    ck.scene_labels = scene_labels;
    auto reg = model.registry();
    auto dump = [&ck](const NamedTensor<S>& nt) {
      NamedBlob blob;
      blob.name = nt.name;
      blob.shape = nt.tensor.shape();
      blob.data.reserve(static_cast<size_t>(nt.tensor.numel()));
      for (S v : nt.tensor.values()) blob.data.push_back(static_cast<float>(v));
      ck.tensors.push_back(std::move(blob));
    };
    for (const auto& p : reg.params) dump(p);
    for (const auto& b : reg.buffers) dump(b);
    return ck;
  }

  template <typename S>
  ErglModel<S> instantiate() const {
    Rng rng(config.seed);
    ErglModel<S> model(config.model, rng);
    auto reg = model.registry();

    std::vector<const NamedBlob*> by_order;
    auto find = [this](const std::string& name) -> const NamedBlob* {
      for (const auto& t : tensors)
        if (t.name == name) return &t;
      return nullptr;
    };
    size_t expected = reg.params.size() + reg.buffers.size();
    if (tensors.size() != expected)
      throw FormatError("checkpoint: holds " + std::to_string(tensors.size()) +
                        " tensors, model needs " + std::to_string(expected));
    auto restore = [&](NamedTensor<S>& nt) {
      const NamedBlob* blob = find(nt.name);
      if (!blob) throw FormatError("checkpoint: missing tensor '" + nt.name + "'");
      if (blob->shape != nt.tensor.shape())
        throw FormatError("checkpoint: tensor '" + nt.name + "' has shape " +
                          ad::shape_str(blob->shape) + ", model expects " +
                          ad::shape_str(nt.tensor.shape()));
      auto& dst = nt.tensor.values();
      for (size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<S>(blob->data[k]);
    };
    for (auto& p : reg.params) restore(p);
    for (auto& b : reg.buffers) restore(b);
    return model;
  }
};

}  // namespace ergl
