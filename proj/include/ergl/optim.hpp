#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ergl/layers.hpp"

namespace ergl {

// AdamW with decoupled weight decay. Parameters without an accumulated
// gradient are skipped entirely (no moment update, no decay), so unused
// branches stay untouched.
template <typename S>
class AdamW {
 public:
  AdamW(std::vector<NamedTensor<S>> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8, double weight_decay = 0.01)
      : params_(std::move(params)),
        lr_(lr),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        weight_decay_(weight_decay) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    steps_.assign(params_.size(), 0);
    frozen_.assign(params_.size(), false);
  }

  // lr-mask parameters whose name starts with any of the given prefixes
  void set_freeze(const std::vector<std::string>& prefixes) {
    for (size_t i = 0; i < params_.size(); ++i) {
      frozen_[i] = false;
      for (const auto& p : prefixes)
        if (params_[i].name.rfind(p, 0) == 0) frozen_[i] = true;
    }
  }

  void step() {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i].tensor;
      if (frozen_[i] || !t.has_grad()) continue;
      const auto& g = t.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      if (m.empty()) {
        m.assign(g.size(), S(0));
        v.assign(g.size(), S(0));
      }
      int64_t step = ++steps_[i];
      S bc1 = static_cast<S>(1.0 - std::pow(beta1_, static_cast<double>(step)));
      S bc2 = static_cast<S>(1.0 - std::pow(beta2_, static_cast<double>(step)));
      S decay = static_cast<S>(1.0 - lr_ * weight_decay_);
      S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
      S lr = static_cast<S>(lr_), eps = static_cast<S>(eps_);
      S* p = t.data();
      for (size_t k = 0; k < g.size(); ++k) {
        p[k] *= decay;
        m[k] = b1 * m[k] + (S(1) - b1) * g[k];
        v[k] = b2 * v[k] + (S(1) - b2) * g[k] * g[k];
        S mhat = m[k] / bc1;
        S vhat = v[k] / bc2;
        p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  // optimizer state exposure for checkpoints
  const std::vector<NamedTensor<S>>& params() const { return params_; }
  const std::vector<std::vector<S>>& first_moments() const { return m_; }
  const std::vector<std::vector<S>>& second_moments() const { return v_; }
  const std::vector<int64_t>& steps() const { return steps_; }
  void restore_state(size_t i, std::vector<S> m, std::vector<S> v, int64_t step) {
    m_[i] = std::move(m);
    v_[i] = std::move(v);
    steps_[i] = step;
  }

 private:
  std::vector<NamedTensor<S>> params_;
  std::vector<std::vector<S>> m_, v_;
  std::vector<int64_t> steps_;
  std::vector<bool> frozen_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
};

}  // namespace ergl
