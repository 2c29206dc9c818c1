#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ergl/detail/kernels.hpp"
#include "ergl/tape.hpp"
#include "ergl/tensor.hpp"

namespace ergl::ad {

namespace detail {

template <typename S>
inline std::vector<S>* grad_in(const std::shared_ptr<TensorData<S>>& t) {
  if (!t->requires_grad) return nullptr;
  if (t->grad.empty()) t->grad.assign(t->data.size(), S(0));
  return &t->grad;
}

// Upstream gradient, or null when the output never received one.
template <typename S>
inline const std::vector<S>* grad_out(const std::shared_ptr<TensorData<S>>& t) {
  return t->grad.empty() ? nullptr : &t->grad;
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw DimensionError(std::string(op) + ": shapes differ: " + shape_str(a) + " vs " + shape_str(b));
}

inline void check_axis(const Shape& s, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " + shape_str(s));
}

inline int64_t prod_range(const Shape& s, size_t lo, size_t hi) {
  int64_t p = 1;
  for (size_t i = lo; i < hi; ++i) p *= s[i];
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "add");
  Tensor<S> y(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* py = y.data();
  int64_t n = y.numel();
  detail::parallel_chunks(n, 4096, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) py[i] = pa[i] + pb[i];
  });
  auto* tp = Tape<S>::active();
  if (tp && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    auto ad = a.ptr(), bd = b.ptr(), yd = y.ptr();
    tp->record([ad, bd, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* ga = detail::grad_in(ad))
        for (size_t i = 0; i < gy->size(); ++i) (*ga)[i] += (*gy)[i];
      if (auto* gb = detail::grad_in(bd))
        for (size_t i = 0; i < gy->size(); ++i) (*gb)[i] += (*gy)[i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "sub");
  Tensor<S> y(a.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = a.data()[i] - b.data()[i];
  auto* tp = Tape<S>::active();
  if (tp && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    auto ad = a.ptr(), bd = b.ptr(), yd = y.ptr();
    tp->record([ad, bd, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* ga = detail::grad_in(ad))
        for (size_t i = 0; i < gy->size(); ++i) (*ga)[i] += (*gy)[i];
      if (auto* gb = detail::grad_in(bd))
        for (size_t i = 0; i < gy->size(); ++i) (*gb)[i] -= (*gy)[i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "mul");
  Tensor<S> y(a.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = a.data()[i] * b.data()[i];
  auto* tp = Tape<S>::active();
  if (tp && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    auto ad = a.ptr(), bd = b.ptr(), yd = y.ptr();
    tp->record([ad, bd, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* ga = detail::grad_in(ad))
        for (size_t i = 0; i < gy->size(); ++i) (*ga)[i] += (*gy)[i] * bd->data[i];
      if (auto* gb = detail::grad_in(bd))
        for (size_t i = 0; i < gy->size(); ++i) (*gb)[i] += (*gy)[i] * ad->data[i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "div");
  Tensor<S> y(a.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = a.data()[i] / b.data()[i];
  auto* tp = Tape<S>::active();
  if (tp && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    auto ad = a.ptr(), bd = b.ptr(), yd = y.ptr();
    tp->record([ad, bd, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* ga = detail::grad_in(ad))
        for (size_t i = 0; i < gy->size(); ++i) (*ga)[i] += (*gy)[i] / bd->data[i];
      if (auto* gb = detail::grad_in(bd))
        for (size_t i = 0; i < gy->size(); ++i)
          (*gb)[i] -= (*gy)[i] * yd->data[i] / bd->data[i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> y(a.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = a.data()[i] * c;
  auto* tp = Tape<S>::active();
  if (tp && a.requires_grad()) {
    y.set_requires_grad(true);
    auto ad = a.ptr(), yd = y.ptr();
    tp->record([ad, yd, c] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* ga = detail::grad_in(ad))
        for (size_t i = 0; i < gy->size(); ++i) (*ga)[i] += (*gy)[i] * c;
    });
  }
  return y;
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  Tensor<S> y(a.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = a.data()[i] + c;
  auto* tp = Tape<S>::active();
  if (tp && a.requires_grad()) {
    y.set_requires_grad(true);
    auto ad = a.ptr(), yd = y.ptr();
    tp->record([ad, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* ga = detail::grad_in(ad))
        for (size_t i = 0; i < gy->size(); ++i) (*ga)[i] += (*gy)[i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  // x * 0 keeps NaN propagating instead of silently clamping it
  for (int64_t i = 0; i < y.numel(); ++i)
    y.data()[i] = x.data()[i] > S(0) ? x.data()[i] : x.data()[i] * S(0);
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gx = detail::grad_in(xd))
        for (size_t i = 0; i < gy->size(); ++i)
          if (xd->data[i] > S(0)) (*gx)[i] += (*gy)[i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  for (int64_t i = 0; i < y.numel(); ++i) {
    S v = x.data()[i];
    if (v >= S(0)) {
      y.data()[i] = S(1) / (S(1) + std::exp(-v));
    } else {
      S e = std::exp(v);
      y.data()[i] = e / (S(1) + e);
    }
  }
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gx = detail::grad_in(xd))
        for (size_t i = 0; i < gy->size(); ++i) {
          S s = yd->data[i];
          (*gx)[i] += (*gy)[i] * s * (S(1) - s);
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<S> y(std::move(shape), x.values());
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gx = detail::grad_in(xd))
        for (size_t i = 0; i < gy->size(); ++i) (*gx)[i] += (*gy)[i];
    });
  }
  return y;
}

namespace detail {
inline std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// out_index(flat_in) for a permutation; shared by forward and adjoint.
inline std::vector<int64_t> permute_map(const Shape& in_shape, const std::vector<int>& perm) {
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  auto in_st = strides_of(in_shape);
  auto out_st = strides_of(out_shape);
  int64_t n = shape_numel(in_shape);
  std::vector<int64_t> map(n);
  std::vector<int64_t> idx(in_shape.size(), 0);
  for (int64_t f = 0; f < n; ++f) {
    int64_t rem = f;
    int64_t of = 0;
    for (size_t d = 0; d < in_shape.size(); ++d) {
      idx[d] = rem / in_st[d];
      rem %= in_st[d];
    }
    for (size_t d = 0; d < perm.size(); ++d) of += idx[perm[d]] * out_st[d];
    map[f] = of;
  }
  return map;
}
}  // namespace detail

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm) {
  if (perm.size() != x.shape().size())
    throw DimensionError("permute: order size " + std::to_string(perm.size()) + " vs " +
                         shape_str(x.shape()));
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    detail::check_axis(x.shape(), perm[i], "permute");
    out_shape[i] = x.shape()[perm[i]];
  }
  auto map = detail::permute_map(x.shape(), perm);
  Tensor<S> y(out_shape);
  for (int64_t i = 0; i < x.numel(); ++i) y.data()[map[i]] = x.data()[i];
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd, map = std::move(map)] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gx = detail::grad_in(xd))
        for (size_t i = 0; i < gx->size(); ++i) (*gx)[i] += (*gy)[map[i]];
    });
  }
  return y;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  detail::check_axis(parts[0].shape(), axis, "concat");
  Shape out_shape = parts[0].shape();
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != parts[0].ndim())
      throw DimensionError("concat: rank mismatch " + shape_str(p.shape()));
    for (int d = 0; d < p.ndim(); ++d)
      if (d != axis && p.shape()[d] != out_shape[static_cast<size_t>(d)])
        throw DimensionError("concat: shapes " + shape_str(parts[0].shape()) + " vs " +
                             shape_str(p.shape()));
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  Tensor<S> y(out_shape);

  int64_t outer = detail::prod_range(out_shape, 0, static_cast<size_t>(axis));
  int64_t inner = detail::prod_range(out_shape, static_cast<size_t>(axis) + 1, out_shape.size());
  int64_t out_row = total * inner;
  int64_t off = 0;
  std::vector<int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    int64_t blk = p.shape()[axis] * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(p.data() + o * blk, blk, y.data() + o * out_row + off);
    off += blk;
  }

  auto* tp = Tape<S>::active();
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tp && any) {
    y.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData<S>>> pds;
    std::vector<int64_t> blks;
    for (const auto& p : parts) {
      pds.push_back(p.ptr());
      blks.push_back(p.shape()[axis] * inner);
    }
    auto yd = y.ptr();
    tp->record([pds, blks, offsets, outer, out_row, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      for (size_t k = 0; k < pds.size(); ++k) {
        auto* gp = detail::grad_in(pds[k]);
        if (!gp) continue;
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < blks[k]; ++i)
            (*gp)[o * blks[k] + i] += (*gy)[o * out_row + offsets[k] + i];
      }
    });
  }
  return y;
}

// Insert a new axis of extent `copies` at position `axis`, repeating values.
template <typename S>
Tensor<S> expand(const Tensor<S>& x, int axis, int64_t copies) {
  if (axis < 0 || axis > x.ndim())
    throw DimensionError("expand: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin() + axis, copies);
  int64_t outer = detail::prod_range(x.shape(), 0, static_cast<size_t>(axis));
  int64_t inner = detail::prod_range(x.shape(), static_cast<size_t>(axis), x.shape().size());
  Tensor<S> y(out_shape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t c = 0; c < copies; ++c)
      std::copy_n(x.data() + o * inner, inner, y.data() + (o * copies + c) * inner);
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd, outer, copies, inner] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gx = detail::grad_in(xd))
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t c = 0; c < copies; ++c)
            for (int64_t i = 0; i < inner; ++i)
              (*gx)[o * inner + i] += (*gy)[(o * copies + c) * inner + i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  S acc = S(0);
  for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  Tensor<S> y = Tensor<S>::scalar(acc);
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gx = detail::grad_in(xd))
        for (auto& g : *gx) g += (*gy)[0];
    });
  }
  return y;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  return scale(sum_all(x), S(1) / static_cast<S>(x.numel()));
}

template <typename S>
Tensor<S> sum_axis(const Tensor<S>& x, int axis) {
  detail::check_axis(x.shape(), axis, "sum_axis");
  const Shape& s = x.shape();
  int64_t outer = detail::prod_range(s, 0, static_cast<size_t>(axis));
  int64_t len = s[axis];
  int64_t inner = detail::prod_range(s, static_cast<size_t>(axis) + 1, s.size());
  Shape out_shape;
  for (int d = 0; d < x.ndim(); ++d)
    if (d != axis) out_shape.push_back(s[d]);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<S> y(out_shape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t l = 0; l < len; ++l)
      for (int64_t i = 0; i < inner; ++i)
        y.data()[o * inner + i] += x.data()[(o * len + l) * inner + i];
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd, outer, len, inner] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gx = detail::grad_in(xd))
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t l = 0; l < len; ++l)
            for (int64_t i = 0; i < inner; ++i)
              (*gx)[(o * len + l) * inner + i] += (*gy)[o * inner + i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> mean_axis(const Tensor<S>& x, int axis) {
  detail::check_axis(x.shape(), axis, "mean_axis");
  return scale(sum_axis(x, axis), S(1) / static_cast<S>(x.shape()[axis]));
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul: expects 2-d operands, got " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), p = b.dim(1);
  if (k != k2)
    throw DimensionError("matmul: inner extents differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  Tensor<S> y({m, p});
  detail::gemm_nn(a.data(), b.data(), y.data(), m, k, p, false);
  auto* tp = Tape<S>::active();
  if (tp && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    auto ad = a.ptr(), bd = b.ptr(), yd = y.ptr();
    tp->record([ad, bd, yd, m, k, p] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* ga = detail::grad_in(ad))
        detail::gemm_nt(gy->data(), bd->data.data(), ga->data(), m, p, k, true);
      if (auto* gb = detail::grad_in(bd))
        detail::gemm_tn(ad->data.data(), gy->data(), gb->data(), m, k, p, true);
    });
  }
  return y;
}

// x[..., k] * w[k, p] -> [..., p]; leading dims are treated as rows.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w) {
  if (w.ndim() != 2)
    throw DimensionError("linear: weight must be 2-d, got " + shape_str(w.shape()));
  if (x.ndim() < 1 || x.shape().back() != w.dim(0))
    throw DimensionError("linear: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  int64_t k = w.dim(0), p = w.dim(1);
  int64_t rows = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = p;
  Tensor<S> y(out_shape);
  detail::gemm_nn(x.data(), w.data(), y.data(), rows, k, p, false);
  auto* tp = Tape<S>::active();
  if (tp && (x.requires_grad() || w.requires_grad())) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), wd = w.ptr(), yd = y.ptr();
    tp->record([xd, wd, yd, rows, k, p] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gx = detail::grad_in(xd))
        detail::gemm_nt(gy->data(), wd->data.data(), gx->data(), rows, p, k, true);
      if (auto* gw = detail::grad_in(wd))
        detail::gemm_tn(xd->data.data(), gy->data(), gw->data(), rows, k, p, true);
    });
  }
  return y;
}

// linear plus a broadcast bias row.
template <typename S>
Tensor<S> affine(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (b.ndim() != 1 || b.dim(0) != w.dim(1))
    throw DimensionError("affine: bias " + shape_str(b.shape()) + " vs weight " +
                         shape_str(w.shape()));
  Tensor<S> y = linear(x, w);
  int64_t p = w.dim(1);
  int64_t rows = y.numel() / p;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < p; ++j) y.data()[r * p + j] += b.data()[j];
  auto* tp = Tape<S>::active();
  if (tp && b.requires_grad()) {
    // y already carries the linear() adjoint; only the bias needs one more.
    y.set_requires_grad(true);
    auto bd = b.ptr(), yd = y.ptr();
    tp->record([bd, yd, rows, p] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      if (auto* gb = detail::grad_in(bd))
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < p; ++j) (*gb)[j] += (*gy)[r * p + j];
    });
  }
  return y;
}

// Batched matmul: a[B, m, k] * b[B, k, p] (or b[B, p, k] with transpose_b).
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b, bool transpose_b = false) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
    throw DimensionError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int64_t nb = a.dim(0), m = a.dim(1), k = a.dim(2);
  int64_t p = transpose_b ? b.dim(1) : b.dim(2);
  int64_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k)
    throw DimensionError("bmm: inner extents differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + (transpose_b ? " (b transposed)" : ""));
  Tensor<S> y({nb, m, p});
  detail::parallel_chunks(nb, 1, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const S* pa = a.data() + i * m * k;
      const S* pb = b.data() + i * k * p;
      S* py = y.data() + i * m * p;
      if (transpose_b)
        detail::gemm_nt(pa, pb, py, m, k, p, false);
      else
        detail::gemm_nn(pa, pb, py, m, k, p, false);
    }
  });
  auto* tp = Tape<S>::active();
  if (tp && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    auto ad = a.ptr(), bd = b.ptr(), yd = y.ptr();
    tp->record([ad, bd, yd, nb, m, k, p, transpose_b] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      auto* ga = detail::grad_in(ad);
      auto* gb = detail::grad_in(bd);
      detail::parallel_chunks(nb, 1, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
          const S* pgy = gy->data() + i * m * p;
          const S* pa = ad->data.data() + i * m * k;
          const S* pb = bd->data.data() + i * k * p;
          if (ga) {
            S* pga = ga->data() + i * m * k;
            if (transpose_b)
              detail::gemm_nn(pgy, pb, pga, m, p, k, true);
            else
              detail::gemm_nt(pgy, pb, pga, m, p, k, true);
          }
          if (gb) {
            S* pgb = gb->data() + i * k * p;
            if (transpose_b)
              detail::gemm_tn(pgy, pa, pgb, m, p, k, true);
            else
              detail::gemm_tn(pa, pgy, pgb, m, k, p, true);
          }
        }
      });
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Softmax and losses
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  detail::check_axis(x.shape(), axis, "softmax");
  const Shape& s = x.shape();
  int64_t outer = detail::prod_range(s, 0, static_cast<size_t>(axis));
  int64_t len = s[axis];
  int64_t inner = detail::prod_range(s, static_cast<size_t>(axis) + 1, s.size());
  Tensor<S> y(s);
  const S* px = x.data();
  S* py = y.data();
  detail::parallel_chunks(outer * inner, 256, [&](int64_t lo, int64_t hi) {
    for (int64_t lane = lo; lane < hi; ++lane) {
      int64_t o = lane / inner, i = lane % inner;
      int64_t base = o * len * inner + i;
      S mx = px[base];
      for (int64_t l = 1; l < len; ++l) mx = std::max(mx, px[base + l * inner]);
      S denom = S(0);
      for (int64_t l = 0; l < len; ++l) {
        S e = std::exp(px[base + l * inner] - mx);
        py[base + l * inner] = e;
        denom += e;
      }
      for (int64_t l = 0; l < len; ++l) py[base + l * inner] /= denom;
    }
  });
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd, outer, len, inner] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      auto* gx = detail::grad_in(xd);
      if (!gx) return;
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
          int64_t base = o * len * inner + i;
          S dot = S(0);
          for (int64_t l = 0; l < len; ++l)
            dot += (*gy)[base + l * inner] * yd->data[base + l * inner];
          for (int64_t l = 0; l < len; ++l) {
            int64_t at = base + l * inner;
            (*gx)[at] += yd->data[at] * ((*gy)[at] - dot);
          }
        }
    });
  }
  return y;
}

// Mean over the batch of -log softmax(logits)[label].
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int64_t>& labels) {
  if (logits.ndim() != 2)
    throw DimensionError("cross_entropy: logits must be 2-d, got " + shape_str(logits.shape()));
  int64_t nb = logits.dim(0), nc = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != nb)
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(nb));
  for (int64_t lab : labels)
    if (lab < 0 || lab >= nc)
      throw ContractError("cross_entropy: label " + std::to_string(lab) + " outside [0," +
                          std::to_string(nc) + ")");
  std::vector<S> probs(static_cast<size_t>(nb * nc));
  S loss = S(0);
  for (int64_t b = 0; b < nb; ++b) {
    const S* row = logits.data() + b * nc;
    S mx = row[0];
    for (int64_t c = 1; c < nc; ++c) mx = std::max(mx, row[c]);
    S denom = S(0);
    for (int64_t c = 0; c < nc; ++c) {
      probs[b * nc + c] = std::exp(row[c] - mx);
      denom += probs[b * nc + c];
    }
    for (int64_t c = 0; c < nc; ++c) probs[b * nc + c] /= denom;
    loss -= std::log(probs[b * nc + labels[b]]);
  }
  Tensor<S> y = Tensor<S>::scalar(loss / static_cast<S>(nb));
  auto* tp = Tape<S>::active();
  if (tp && logits.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = logits.ptr(), yd = y.ptr();
    tp->record([xd, yd, probs = std::move(probs), labels, nb, nc] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      auto* gx = detail::grad_in(xd);
      if (!gx) return;
      S g = (*gy)[0] / static_cast<S>(nb);
      for (int64_t b = 0; b < nb; ++b)
        for (int64_t c = 0; c < nc; ++c)
          (*gx)[b * nc + c] += g * (probs[b * nc + c] - (labels[b] == c ? S(1) : S(0)));
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolution and pooling (NCHW)
// ---------------------------------------------------------------------------

namespace detail {
// M[p, c*9+u] = x[c, oy+dy-1, ox+dx-1], zero outside. One image.
template <typename S>
void im2col3x3(const S* x, int64_t ch, int64_t h, int64_t w, S* m) {
  for (int64_t oy = 0; oy < h; ++oy)
    for (int64_t ox = 0; ox < w; ++ox) {
      S* row = m + (oy * w + ox) * ch * 9;
      for (int64_t c = 0; c < ch; ++c)
        for (int64_t dy = 0; dy < 3; ++dy) {
          int64_t iy = oy + dy - 1;
          for (int64_t dx = 0; dx < 3; ++dx) {
            int64_t ix = ox + dx - 1;
            row[c * 9 + dy * 3 + dx] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x[(c * h + iy) * w + ix] : S(0);
          }
        }
    }
}

// Scatter-add of the im2col layout back into one image's gradient.
template <typename S>
void col2im3x3(const S* m, int64_t ch, int64_t h, int64_t w, S* gx) {
  for (int64_t c = 0; c < ch; ++c)
    for (int64_t oy = 0; oy < h; ++oy)
      for (int64_t ox = 0; ox < w; ++ox) {
        const S* row = m + (oy * w + ox) * ch * 9;
        for (int64_t dy = 0; dy < 3; ++dy) {
          int64_t iy = oy + dy - 1;
          if (iy < 0 || iy >= h) continue;
          for (int64_t dx = 0; dx < 3; ++dx) {
            int64_t ix = ox + dx - 1;
            if (ix < 0 || ix >= w) continue;
            gx[(c * h + iy) * w + ix] += row[c * 9 + dy * 3 + dx];
          }
        }
      }
}
}  // namespace detail

// Same-padding 3x3 cross-correlation, stride 1.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernel) {
  if (x.ndim() != 4 || kernel.ndim() != 4)
    throw DimensionError("conv2d: " + shape_str(x.shape()) + " with kernel " +
                         shape_str(kernel.shape()));
  if (kernel.dim(2) != 3 || kernel.dim(3) != 3)
    throw DimensionError("conv2d: kernel spatial size must be 3x3, got " +
                         shape_str(kernel.shape()));
  if (kernel.dim(1) != x.dim(1))
    throw DimensionError("conv2d: channel mismatch: input " + shape_str(x.shape()) +
                         " vs kernel " + shape_str(kernel.shape()));
  int64_t nb = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t oc = kernel.dim(0);
  int64_t c9 = ch * 9, hw = h * w;
  Tensor<S> y({nb, oc, h, w});
  detail::parallel_chunks(nb, 1, [&](int64_t lo, int64_t hi) {
    std::vector<S> m(static_cast<size_t>(hw * c9));
    for (int64_t b = lo; b < hi; ++b) {
      detail::im2col3x3(x.data() + b * ch * hw, ch, h, w, m.data());
      // out[oc, hw] = K[oc, c9] * M[hw, c9]^T
      detail::gemm_nt(kernel.data(), m.data(), y.data() + b * oc * hw, oc, c9, hw, false);
    }
  });
  auto* tp = Tape<S>::active();
  if (tp && (x.requires_grad() || kernel.requires_grad())) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), kd = kernel.ptr(), yd = y.ptr();
    tp->record([xd, kd, yd, nb, ch, h, w, oc, c9, hw] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      auto* gx = detail::grad_in(xd);
      auto* gk = detail::grad_in(kd);
      std::vector<std::vector<S>> gk_partial;
      if (gk) gk_partial.assign(static_cast<size_t>(nb), {});
      detail::parallel_chunks(nb, 1, [&](int64_t lo, int64_t hi) {
        std::vector<S> m(static_cast<size_t>(hw * c9));
        std::vector<S> gm(static_cast<size_t>(hw * c9));
        for (int64_t b = lo; b < hi; ++b) {
          const S* pgy = gy->data() + b * oc * hw;
          if (gk) {
            detail::im2col3x3(xd->data.data() + b * ch * hw, ch, h, w, m.data());
            auto& part = gk_partial[static_cast<size_t>(b)];
            part.assign(static_cast<size_t>(oc * c9), S(0));
            // dK[oc, c9] = dY[oc, hw] * M[hw, c9]
            detail::gemm_nn(pgy, m.data(), part.data(), oc, hw, c9, false);
          }
          if (gx) {
            // dM[hw, c9] = dY[oc, hw]^T * K[oc, c9]
            detail::gemm_tn(pgy, kd->data.data(), gm.data(), oc, hw, c9, false);
            detail::col2im3x3(gm.data(), ch, h, w, gx->data() + b * ch * hw);
          }
        }
      });
      if (gk)
        for (int64_t b = 0; b < nb; ++b)
          for (size_t i = 0; i < gk->size(); ++i) (*gk)[i] += gk_partial[static_cast<size_t>(b)][i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> avg_pool2d(const Tensor<S>& x, int64_t k = 2) {
  if (x.ndim() != 4) throw DimensionError("avg_pool2d: expects 4-d input, got " + shape_str(x.shape()));
  int64_t nb = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t oh = h / k, ow = w / k;
  if (oh < 1 || ow < 1)
    throw DimensionError("avg_pool2d: input " + shape_str(x.shape()) + " too small for window " +
                         std::to_string(k));
  Tensor<S> y({nb, ch, oh, ow});
  S inv = S(1) / static_cast<S>(k * k);
  for (int64_t bc = 0; bc < nb * ch; ++bc) {
    const S* px = x.data() + bc * h * w;
    S* py = y.data() + bc * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        S acc = S(0);
        for (int64_t dy = 0; dy < k; ++dy)
          for (int64_t dx = 0; dx < k; ++dx) acc += px[(oy * k + dy) * w + ox * k + dx];
        py[oy * ow + ox] = acc * inv;
      }
  }
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd, nb, ch, h, w, oh, ow, k, inv] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      auto* gx = detail::grad_in(xd);
      if (!gx) return;
      for (int64_t bc = 0; bc < nb * ch; ++bc)
        for (int64_t oy = 0; oy < oh; ++oy)
          for (int64_t ox = 0; ox < ow; ++ox) {
            S g = (*gy)[bc * oh * ow + oy * ow + ox] * inv;
            for (int64_t dy = 0; dy < k; ++dy)
              for (int64_t dx = 0; dx < k; ++dx)
                (*gx)[bc * h * w + (oy * k + dy) * w + ox * k + dx] += g;
          }
    });
  }
  return y;
}

template <typename S>
Tensor<S> max_pool2d(const Tensor<S>& x, int64_t k = 2) {
  if (x.ndim() != 4) throw DimensionError("max_pool2d: expects 4-d input, got " + shape_str(x.shape()));
  int64_t nb = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t oh = h / k, ow = w / k;
  if (oh < 1 || ow < 1)
    throw DimensionError("max_pool2d: input " + shape_str(x.shape()) + " too small for window " +
                         std::to_string(k));
  Tensor<S> y({nb, ch, oh, ow});
  std::vector<int64_t> arg(static_cast<size_t>(y.numel()));
  for (int64_t bc = 0; bc < nb * ch; ++bc) {
    const S* px = x.data() + bc * h * w;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        int64_t best = (oy * k) * w + ox * k;
        for (int64_t dy = 0; dy < k; ++dy)
          for (int64_t dx = 0; dx < k; ++dx) {
            int64_t at = (oy * k + dy) * w + ox * k + dx;
            if (px[at] > px[best]) best = at;
          }
        y.data()[bc * oh * ow + oy * ow + ox] = px[best];
        arg[static_cast<size_t>(bc * oh * ow + oy * ow + ox)] = bc * h * w + best;
      }
  }
  auto* tp = Tape<S>::active();
  if (tp && x.requires_grad()) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), yd = y.ptr();
    tp->record([xd, yd, arg = std::move(arg)] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      auto* gx = detail::grad_in(xd);
      if (!gx) return;
      for (size_t i = 0; i < arg.size(); ++i) (*gx)[arg[i]] += (*gy)[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

// x is [rows, C] or [B, C, H, W]; gamma/beta are [C]. Training mode normalizes
// by batch statistics and folds them into the running buffers; eval mode uses
// the running buffers. The population per channel must have at least two
// entries in training mode (degenerate variance otherwise).
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, S momentum, S eps,
                     bool training) {
  int64_t c;
  int64_t outer, inner;  // population index = (o, i); channel stride layout below
  if (x.ndim() == 2) {
    outer = x.dim(0);
    c = x.dim(1);
    inner = 1;
  } else if (x.ndim() == 4) {
    outer = x.dim(0);
    c = x.dim(1);
    inner = x.dim(2) * x.dim(3);
  } else {
    throw DimensionError("batch_norm: expects 2-d or 4-d input, got " + shape_str(x.shape()));
  }
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw DimensionError("batch_norm: parameter size mismatch for " + std::to_string(c) +
                         " channels");
  int64_t m = outer * inner;
  if (training && m < 2)
    throw ContractError("batch_norm: population of size " + std::to_string(m) +
                        " has degenerate variance in train mode");

  auto at = [c, inner](int64_t o, int64_t ch, int64_t i) { return (o * c + ch) * inner + i; };

  std::vector<S> mean(static_cast<size_t>(c)), var(static_cast<size_t>(c));
  if (training) {
    detail::parallel_chunks(c, 8, [&](int64_t lo, int64_t hi) {
      for (int64_t ch = lo; ch < hi; ++ch) {
        S mu = S(0);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < inner; ++i) mu += x.data()[at(o, ch, i)];
        mu /= static_cast<S>(m);
        S v = S(0);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < inner; ++i) {
            S d = x.data()[at(o, ch, i)] - mu;
            v += d * d;
          }
        v /= static_cast<S>(m);
        mean[static_cast<size_t>(ch)] = mu;
        var[static_cast<size_t>(ch)] = v;
      }
    });
    // Unbiased variance goes into the running estimate.
    S unbias = static_cast<S>(m) / static_cast<S>(m - 1);
    for (int64_t ch = 0; ch < c; ++ch) {
      running_mean.data()[ch] = momentum * running_mean.data()[ch] + (S(1) - momentum) * mean[ch];
      running_var.data()[ch] =
          momentum * running_var.data()[ch] + (S(1) - momentum) * var[ch] * unbias;
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[static_cast<size_t>(ch)] = running_mean.data()[ch];
      var[static_cast<size_t>(ch)] = running_var.data()[ch];
    }
  }

  Tensor<S> y(x.shape());
  detail::parallel_chunks(c, 8, [&](int64_t lo, int64_t hi) {
    for (int64_t ch = lo; ch < hi; ++ch) {
      S ivar = S(1) / std::sqrt(var[static_cast<size_t>(ch)] + eps);
      S g = gamma.data()[ch], bt = beta.data()[ch], mu = mean[static_cast<size_t>(ch)];
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
          int64_t idx = at(o, ch, i);
          y.data()[idx] = g * (x.data()[idx] - mu) * ivar + bt;
        }
    }
  });

  auto* tp = Tape<S>::active();
  if (tp && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
    y.set_requires_grad(true);
    auto xd = x.ptr(), gd = gamma.ptr(), bd = beta.ptr(), yd = y.ptr();
    tp->record([xd, gd, bd, yd, mean = std::move(mean), var = std::move(var), outer, inner, c, m,
                eps, training, at] {
      const auto* gy = detail::grad_out(yd);
      if (!gy) return;
      auto* gx = detail::grad_in(xd);
      auto* gg = detail::grad_in(gd);
      auto* gb = detail::grad_in(bd);
      detail::parallel_chunks(c, 8, [&](int64_t lo, int64_t hi) {
        for (int64_t ch = lo; ch < hi; ++ch) {
          S mu = mean[static_cast<size_t>(ch)];
          S ivar = S(1) / std::sqrt(var[static_cast<size_t>(ch)] + eps);
          S g = gd->data[ch];
          S sum_dy = S(0), sum_dy_xhat = S(0);
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
              int64_t idx = at(o, ch, i);
              S xhat = (xd->data[idx] - mu) * ivar;
              sum_dy += (*gy)[idx];
              sum_dy_xhat += (*gy)[idx] * xhat;
            }
          if (gb) (*gb)[ch] += sum_dy;
          if (gg) (*gg)[ch] += sum_dy_xhat;
          if (gx) {
            if (training) {
              S inv_m = S(1) / static_cast<S>(m);
              for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                  int64_t idx = at(o, ch, i);
                  S xhat = (xd->data[idx] - mu) * ivar;
                  (*gx)[idx] +=
                      g * ivar * ((*gy)[idx] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
                }
            } else {
              for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                  int64_t idx = at(o, ch, i);
                  (*gx)[idx] += g * ivar * (*gy)[idx];
                }
            }
          }
        }
      });
    });
  }
  return y;
}

}  // namespace ergl::ad
