#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ergl/ops.hpp"
#include "ergl/rng.hpp"

namespace ergl {

template <typename S>
struct NamedTensor {
  std::string name;
  ad::Tensor<S> tensor;
};

// Learnable parameters and non-learnable buffers (running stats), by name.
template <typename S>
struct ParamRegistry {
  std::vector<NamedTensor<S>> params;
  std::vector<NamedTensor<S>> buffers;

  void add_param(std::string name, const ad::Tensor<S>& t) {
    params.push_back({std::move(name), t});
  }
  void add_buffer(std::string name, const ad::Tensor<S>& t) {
    buffers.push_back({std::move(name), t});
  }
};

// Kaiming-uniform with fan-in scaling: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename S>
ad::Tensor<S> kaiming_uniform(ad::Shape shape, int64_t fan_in, Rng& rng) {
  S bound = static_cast<S>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  ad::Tensor<S> t = ad::Tensor<S>::uniform(std::move(shape), rng, -bound, bound);
  t.set_requires_grad(true);
  return t;
}

template <typename S>
struct Linear {
  ad::Tensor<S> w;  // [in, out]
  ad::Tensor<S> b;  // [out]

  void init(int64_t in, int64_t out, Rng& rng, bool zero = false) {
    if (zero) {
      w = ad::Tensor<S>({in, out}, S(0));
      w.set_requires_grad(true);
    } else {
      w = kaiming_uniform<S>({in, out}, in, rng);
    }
    b = ad::Tensor<S>({out}, S(0));
    b.set_requires_grad(true);
  }

  ad::Tensor<S> forward(const ad::Tensor<S>& x) const { return ad::affine(x, w, b); }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    reg.add_param(prefix + ".w", w);
    reg.add_param(prefix + ".b", b);
  }
};

template <typename S>
struct Conv3x3 {
  ad::Tensor<S> w;  // [out, in, 3, 3]

  void init(int64_t in, int64_t out, Rng& rng) {
    w = kaiming_uniform<S>({out, in, 3, 3}, in * 9, rng);
  }

  ad::Tensor<S> forward(const ad::Tensor<S>& x) const { return ad::conv2d(x, w); }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    reg.add_param(prefix + ".w", w);
  }
};

template <typename S>
struct BatchNorm {
  ad::Tensor<S> gamma, beta;
  ad::Tensor<S> run_mean, run_var;
  S momentum = S(0.9);
  S eps = static_cast<S>(1e-5);

  void init(int64_t channels) {
    gamma = ad::Tensor<S>({channels}, S(1));
    gamma.set_requires_grad(true);
    beta = ad::Tensor<S>({channels}, S(0));
    beta.set_requires_grad(true);
    run_mean = ad::Tensor<S>({channels}, S(0));
    run_var = ad::Tensor<S>({channels}, S(1));
  }

  ad::Tensor<S> forward(const ad::Tensor<S>& x, bool training) {
    return ad::batch_norm(x, gamma, beta, run_mean, run_var, momentum, eps, training);
  }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    reg.add_param(prefix + ".gamma", gamma);
    reg.add_param(prefix + ".beta", beta);
    reg.add_buffer(prefix + ".run_mean", run_mean);
    reg.add_buffer(prefix + ".run_var", run_var);
  }
};

}  // namespace ergl
