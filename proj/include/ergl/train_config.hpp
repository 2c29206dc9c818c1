#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ergl/backbone.hpp"

namespace ergl {

// Full training configuration; the model section is nested.
struct TrainConfig {
  ModelConfig model;

  double lambda1 = 1.0;  // event loss weight
  double lambda2 = 1.0;  // scene loss weight
  double lr = 1e-4;
  int batch_size = 64;
  int epochs = 400;
  uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string precision = "f32";       // f32 | f64
  std::vector<std::string> freeze;     // parameter-name prefixes with lr masked

  void validate() const {
    model.validate();
    if (lr <= 0) throw ConfigError("config: lr must be positive");
    if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
    if (epochs < 1) throw ConfigError("config: epochs must be positive");
    if (precision != "f32" && precision != "f64")
      throw ConfigError("config: precision must be f32 or f64, got '" + precision + "'");
    if (weight_decay < 0) throw ConfigError("config: weight_decay must be non-negative");
  }
};

}  // namespace ergl
