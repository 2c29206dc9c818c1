#pragma once

#include <Eigen/Core>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ergl::ad::detail {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ConstMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using MutMap = Eigen::Map<RowMat<S>>;

// Work is always split into fixed-size chunks so the floating point result is
// independent of the number of worker threads.
constexpr int64_t kRowChunk = 64;

template <typename F>
inline void parallel_chunks(int64_t count, int64_t chunk, F&& fn) {
  if (count <= 0) return;
  int64_t nchunks = (count + chunk - 1) / chunk;
  if (nchunks == 1) {
    fn(0, count);
    return;
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (int64_t c = 0; c < nchunks; ++c) {
    int64_t lo = c * chunk;
    int64_t hi = lo + chunk < count ? lo + chunk : count;
    fn(lo, hi);
  }
}

// C[m x p] = (or +=) A[m x k] * B[k x p]
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t p, bool accumulate) {
  ConstMap<S> bm(b, k, p);
  parallel_chunks(m, kRowChunk, [&](int64_t lo, int64_t hi) {
    ConstMap<S> am(a + lo * k, hi - lo, k);
    MutMap<S> cm(c + lo * p, hi - lo, p);
    if (accumulate)
      cm.noalias() += am * bm;
    else
      cm.noalias() = am * bm;
  });
}

// C[m x p] = (or +=) A[m x k] * B[p x k]^T
template <typename S>
void gemm_nt(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t p, bool accumulate) {
  ConstMap<S> bm(b, p, k);
  parallel_chunks(m, kRowChunk, [&](int64_t lo, int64_t hi) {
    ConstMap<S> am(a + lo * k, hi - lo, k);
    MutMap<S> cm(c + lo * p, hi - lo, p);
    if (accumulate)
      cm.noalias() += am * bm.transpose();
    else
      cm.noalias() = am * bm.transpose();
  });
}

// C[k x p] = (or +=) A[m x k]^T * B[m x p]
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t p, bool accumulate) {
  ConstMap<S> am(a, m, k);
  ConstMap<S> bm(b, m, p);
  parallel_chunks(k, kRowChunk, [&](int64_t lo, int64_t hi) {
    MutMap<S> cm(c + lo * p, hi - lo, p);
    if (accumulate)
      cm.noalias() += am.middleCols(lo, hi - lo).transpose() * bm;
    else
      cm.noalias() = am.middleCols(lo, hi - lo).transpose() * bm;
  });
}

}  // namespace ergl::ad::detail
