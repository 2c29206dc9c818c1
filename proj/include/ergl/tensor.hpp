#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ergl/errors.hpp"
#include "ergl/rng.hpp"

namespace ergl::ad {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
struct TensorData {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;
};

// Dense row-major tensor with value semantics over shared storage.
// Treat as immutable once it has been fed through a recorded op.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() : d_(std::make_shared<TensorData<S>>()) {}

  explicit Tensor(Shape shape, S fill = S(0)) : d_(std::make_shared<TensorData<S>>()) {
    d_->shape = std::move(shape);
    d_->data.assign(static_cast<size_t>(shape_numel(d_->shape)), fill);
  }

  Tensor(Shape shape, std::vector<S> values) : d_(std::make_shared<TensorData<S>>()) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw DimensionError("tensor: " + shape_str(shape) + " does not hold " +
                           std::to_string(values.size()) + " values");
    d_->shape = std::move(shape);
    d_->data = std::move(values);
  }

  static Tensor scalar(S v) { return Tensor({1}, std::vector<S>{v}); }

  static Tensor randn(Shape shape, Rng& rng, S stddev = S(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.d_->data) v = static_cast<S>(rng.normal()) * stddev;
    return t;
  }

  static Tensor uniform(Shape shape, Rng& rng, S lo, S hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.d_->data) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return d_->shape; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  int64_t dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(d_->data.size()); }

  const std::vector<S>& values() const { return d_->data; }
  std::vector<S>& values() { return d_->data; }
  const S* data() const { return d_->data.data(); }
  S* data() { return d_->data.data(); }

  S item() const {
    if (numel() != 1) throw ContractError("item: tensor " + shape_str(shape()) + " is not scalar");
    return d_->data[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return !d_->grad.empty(); }
  const std::vector<S>& grad() const {
    if (d_->grad.empty())
      throw ContractError("grad: no gradient accumulated for tensor " + shape_str(shape()));
    return d_->grad;
  }
  // Zero-initialized gradient buffer, allocated on first use.
  std::vector<S>& grad_buffer() {
    if (d_->grad.empty()) d_->grad.assign(d_->data.size(), S(0));
    return d_->grad;
  }
  void zero_grad() { d_->grad.clear(); }

  // Deep copy (storage duplicated, grad dropped).
  Tensor clone() const {
    Tensor t;
    t.d_->shape = d_->shape;
    t.d_->data = d_->data;
    t.d_->requires_grad = d_->requires_grad;
    return t;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> t;
    t.ptr()->shape = d_->shape;
    t.ptr()->data.resize(d_->data.size());
    for (size_t i = 0; i < d_->data.size(); ++i) t.ptr()->data[i] = static_cast<T>(d_->data[i]);
    t.ptr()->requires_grad = d_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

  const std::shared_ptr<TensorData<S>>& ptr() const { return d_; }

 private:
  std::shared_ptr<TensorData<S>> d_;
};

}  // namespace ergl::ad
