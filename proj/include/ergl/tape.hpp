#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "ergl/tensor.hpp"

namespace ergl::ad {

// Ordered record of primitive ops executed under a TapeScope. backward()
// replays the adjoints in reverse and then clears the record; the tape is
// confined to a single thread.
template <typename S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> backward_fn) {
    consumed_ = false;
    entries_.push_back(std::move(backward_fn));
  }

  size_t size() const { return entries_.size(); }

  void backward(Tensor<S> loss) {
    if (loss.numel() != 1)
      throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (consumed_ || entries_.empty())
      throw ContractError("backward: tape already consumed; run a new forward pass first");
    loss.grad_buffer()[0] = S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
    consumed_ = true;
  }

  void reset() {
    entries_.clear();
    consumed_ = false;
  }

 private:
  template <typename>
  friend class TapeScope;

  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
  static thread_local Tape* active_;
};

template <typename S>
thread_local Tape<S>* Tape<S>::active_ = nullptr;

// RAII activation; ops record adjoints only while a tape is active.
template <typename S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& tape) : prev_(Tape<S>::active_) { Tape<S>::active_ = &tape; }
  ~TapeScope() { Tape<S>::active_ = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* prev_;
};

}  // namespace ergl::ad
