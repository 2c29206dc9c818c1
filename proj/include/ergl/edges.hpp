#pragma once

#include <cmath>
#include <vector>

#include "ergl/layers.hpp"

namespace ergl {

template <typename S>
struct AttentionParams {
  ad::Tensor<S> wq, wk, wv;  // d x d
  int64_t d = 0;

  void init(int64_t dim, Rng& rng) {
    d = dim;
    wq = kaiming_uniform<S>({dim, dim}, dim, rng);
    wk = kaiming_uniform<S>({dim, dim}, dim, rng);
    wv = kaiming_uniform<S>({dim, dim}, dim, rng);
  }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    reg.add_param(prefix + ".wq", wq);
    reg.add_param(prefix + ".wk", wk);
    reg.add_param(prefix + ".wv", wv);
  }
};

// softmax(Q Wq (K Wk)^T / sqrt(d)) K Wv for a batch of token matrices.
// q_tokens [B, Tq, d], kv_tokens [B, Tk, d] -> [B, Tq, d].
template <typename S>
ad::Tensor<S> cross_attention(const ad::Tensor<S>& q_tokens, const ad::Tensor<S>& kv_tokens,
                              const AttentionParams<S>& params,
                              ad::Tensor<S>* attention_out = nullptr) {
  if (q_tokens.ndim() != 3 || kv_tokens.ndim() != 3)
    throw DimensionError("cross_attention: expects [batch, tokens, d] operands, got " +
                         ad::shape_str(q_tokens.shape()) + " and " +
                         ad::shape_str(kv_tokens.shape()));
  if (q_tokens.dim(2) != params.d || kv_tokens.dim(2) != params.d)
    throw DimensionError("cross_attention: token width mismatch: " +
                         ad::shape_str(q_tokens.shape()) + " / " +
                         ad::shape_str(kv_tokens.shape()) + " vs d=" + std::to_string(params.d));
  auto qp = ad::linear(q_tokens, params.wq);
  auto kp = ad::linear(kv_tokens, params.wk);
  auto vp = ad::linear(kv_tokens, params.wv);
  auto scores =
      ad::scale(ad::bmm(qp, kp, /*transpose_b=*/true),
                static_cast<S>(1.0 / std::sqrt(static_cast<double>(params.d))));
  auto attn = ad::softmax(scores, 2);
  if (attention_out) *attention_out = attn;
  return ad::bmm(attn, vp);
}

// Pre-projected variant sharing Q/K/V projections across node pairs; computes
// exactly the same values as cross_attention.
template <typename S>
ad::Tensor<S> attention_from_projected(const ad::Tensor<S>& qp, const ad::Tensor<S>& kp,
                                       const ad::Tensor<S>& vp, int64_t d) {
  auto scores =
      ad::scale(ad::bmm(qp, kp, true), static_cast<S>(1.0 / std::sqrt(static_cast<double>(d))));
  return ad::bmm(ad::softmax(scores, 2), vp);
}

// G^0: n node embeddings, n x n directed edge vectors, per-event probabilities.
template <typename S>
struct Graph {
  ad::Tensor<S> node_feats;   // [B, n, d]
  ad::Tensor<S> edge_feats;   // [B, n, n, d]
  ad::Tensor<S> event_probs;  // [B, n]
  int layer_index = 0;

  int64_t batch() const { return node_feats.dim(0); }
  int64_t nodes() const { return node_feats.dim(1); }
  int64_t dim() const { return node_feats.dim(2); }
};

// MEL: NCM (node-context cross-attention) followed by NNM (node-node
// cross-attention + GAP) producing the n x n directed edge features.
template <typename S>
struct MelModule {
  AttentionParams<S> ncm_params;
  AttentionParams<S> nnm_params;
  ad::Tensor<S> fallback_proj;  // d x d, only active for use_nnm=false with NCM on
  bool use_ncm = true;
  bool use_nnm = true;
  int64_t d = 0;

  void init(const ModelConfig& cfg, Rng& rng) {
    d = cfg.node_dim;
    use_ncm = cfg.use_ncm;
    use_nnm = cfg.use_nnm;
    ncm_params.init(d, rng);
    nnm_params.init(d, rng);
    fallback_proj = kaiming_uniform<S>({d, d}, d, rng);
  }

  // Tokenwise mean over all node token matrices.
  ad::Tensor<S> context(const std::vector<ad::Tensor<S>>& node_tokens) const {
    ad::Tensor<S> acc = node_tokens[0];
    for (size_t i = 1; i < node_tokens.size(); ++i) acc = ad::add(acc, node_tokens[i]);
    return ad::scale(acc, static_cast<S>(1.0 / static_cast<double>(node_tokens.size())));
  }

  // S_i = cross_attention(X_i, context).
  ad::Tensor<S> ncm(const ad::Tensor<S>& node_tokens_i, const ad::Tensor<S>& ctx) const {
    return cross_attention(node_tokens_i, ctx, ncm_params);
  }

  // e_{i,j} = GAP(cross_attention(S_i, S_j)).
  ad::Tensor<S> nnm(const ad::Tensor<S>& s_i, const ad::Tensor<S>& s_j) const {
    return ad::mean_axis(cross_attention(s_i, s_j, nnm_params), 1);
  }

  // Scene-aware node representations for all events (identity when NCM is off).
  std::vector<ad::Tensor<S>> scene_aware(const std::vector<ad::Tensor<S>>& node_tokens) const {
    if (!use_ncm) return node_tokens;
    auto ctx = context(node_tokens);
    auto kp = ad::linear(ctx, ncm_params.wk);
    auto vp = ad::linear(ctx, ncm_params.wv);
    std::vector<ad::Tensor<S>> out;
    out.reserve(node_tokens.size());
    for (const auto& x : node_tokens)
      out.push_back(attention_from_projected(ad::linear(x, ncm_params.wq), kp, vp, d));
    return out;
  }

  // Full n x n directed edge tensor [B, n, n, d] in row-major (i, j) order.
  // Ablations: use_nnm=false replaces the pair attention with a projected GAP
  // of the destination node; with NCM also off the raw GAP is used so that no
  // MEL parameter participates.
  ad::Tensor<S> edge_tensor(const std::vector<ad::Tensor<S>>& scene_nodes) const {
    auto n = static_cast<int64_t>(scene_nodes.size());
    std::vector<ad::Tensor<S>> rows;
    rows.reserve(static_cast<size_t>(n * n));
    if (!use_nnm) {
      std::vector<ad::Tensor<S>> per_dst;
      per_dst.reserve(static_cast<size_t>(n));
      for (const auto& s : scene_nodes) {
        auto gap = ad::mean_axis(s, 1);  // [B, d]
        per_dst.push_back(use_ncm ? ad::linear(gap, fallback_proj) : gap);
      }
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
          rows.push_back(ad::reshape(per_dst[static_cast<size_t>(j)],
                                     {per_dst[static_cast<size_t>(j)].dim(0), 1,
                                      per_dst[static_cast<size_t>(j)].dim(1)}));
    } else {
      std::vector<ad::Tensor<S>> qs, ks, vs;
      for (const auto& s : scene_nodes) {
        qs.push_back(ad::linear(s, nnm_params.wq));
        ks.push_back(ad::linear(s, nnm_params.wk));
        vs.push_back(ad::linear(s, nnm_params.wv));
      }
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
          auto r = attention_from_projected(qs[static_cast<size_t>(i)], ks[static_cast<size_t>(j)],
                                            vs[static_cast<size_t>(j)], d);
          auto e = ad::mean_axis(r, 1);  // GAP over the token axis
          rows.push_back(ad::reshape(e, {e.dim(0), 1, e.dim(1)}));
        }
    }
    auto flat = ad::concat(rows, 1);  // [B, n*n, d]
    return ad::reshape(flat, {flat.dim(0), n, n, d});
  }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    ncm_params.collect(prefix + ".ncm", reg);
    nnm_params.collect(prefix + ".nnm", reg);
    reg.add_param(prefix + ".fallback.w", fallback_proj);
  }
};

}  // namespace ergl
