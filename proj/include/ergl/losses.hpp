#pragma once

#include "ergl/ops.hpp"

namespace ergl {

// MSE between per-event probabilities and soft targets, mean over batch and
// events.
template <typename S>
ad::Tensor<S> event_loss(const ad::Tensor<S>& probs, const ad::Tensor<S>& targets) {
  if (probs.shape() != targets.shape())
    throw ContractError("event_loss: prediction " + ad::shape_str(probs.shape()) +
                        " vs target " + ad::shape_str(targets.shape()));
  auto diff = ad::sub(probs, targets);
  return ad::mean_all(ad::mul(diff, diff));
}

// Cross entropy between scene logits and integer labels.
template <typename S>
ad::Tensor<S> scene_loss(const ad::Tensor<S>& logits, const std::vector<int64_t>& labels) {
  return ad::cross_entropy(logits, labels);
}

template <typename S>
ad::Tensor<S> combined_loss(const ad::Tensor<S>& l_event, const ad::Tensor<S>& l_scene, S lambda1,
                            S lambda2) {
  return ad::add(ad::scale(l_event, lambda1), ad::scale(l_scene, lambda2));
}

}  // namespace ergl
