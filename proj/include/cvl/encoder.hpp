#pragma once

#include <utility>
#include <vector>

#include "cvl/tensor.hpp"

namespace cvl {

struct LayerNormParams {
  Tensor gamma;  // [H]
  Tensor beta;   // [H]
};

struct AttentionParams {
  Tensor wq, bq;  // [H x H], [H]
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;
  std::size_t heads = 1;  // must divide H
};

struct FeedForwardParams {
  Tensor w1, b1;  // [H x 4H], [4H]
  Tensor w2, b2;  // [4H x H], [H]
};

// Pre-norm residual transformer block.
struct SelfBlockParams {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  FeedForwardParams ffn;
};

// Symmetric cross-modal exchange; each direction owns its attention, feed
// forward, and layer norms.
struct CoBlockParams {
  LayerNormParams ln_x1, ln_x2, ln_y1, ln_y2;
  AttentionParams attn_x;  // queries from x, keys/values from y
  AttentionParams attn_y;  // queries from y, keys/values from x
  FeedForwardParams ffn_x, ffn_y;
};

struct PoolerParams {
  Tensor w;  // [H x H]
  Tensor b;  // [H]
};

struct SingleStreamParams {
  std::vector<SelfBlockParams> blocks;
  PoolerParams pooler;
};

struct DualStreamParams {
  std::vector<SelfBlockParams> text_blocks;
  std::vector<SelfBlockParams> visual_blocks;
  std::vector<CoBlockParams> co_blocks;
  PoolerParams text_pooler;
  PoolerParams visual_pooler;
};

struct StreamOutput {
  Tensor text_hidden;    // [T x H]
  Tensor visual_hidden;  // [R x H]
  Tensor pooled;         // [1 x H]
};

LayerNormParams make_layer_norm(std::size_t hidden);
AttentionParams make_attention(std::size_t hidden, std::size_t heads, Rng& rng);
FeedForwardParams make_feed_forward(std::size_t hidden, Rng& rng);
SelfBlockParams make_self_block(std::size_t hidden, std::size_t heads, Rng& rng);
CoBlockParams make_co_block(std::size_t hidden, std::size_t heads, Rng& rng);
PoolerParams make_pooler(std::size_t hidden, Rng& rng);
SingleStreamParams make_single_stream(std::size_t hidden, std::size_t heads,
                                      std::size_t layers, Rng& rng);
DualStreamParams make_dual_stream(std::size_t hidden, std::size_t heads,
                                  std::size_t text_layers, std::size_t visual_layers,
                                  std::size_t co_layers, Rng& rng);

// Scaled dot-product multi-head attention. Masked key positions receive the
// additive sentinel before softmax and contribute exactly zero weight.
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                            const std::vector<double>& kv_mask,
                            const AttentionParams& params);

Tensor self_attention_block(const Tensor& x, const std::vector<double>& mask,
                            const SelfBlockParams& params);

std::pair<Tensor, Tensor> co_attention_block(const Tensor& x, const Tensor& y,
                                             const std::vector<double>& x_mask,
                                             const std::vector<double>& y_mask,
                                             const CoBlockParams& params);

// Self-attention over the concatenated [text; visual] sequence; pooled is a
// tanh affine of the leading (CLS) position.
StreamOutput single_stream_encode(const Tensor& text_embed, const Tensor& visual_embed,
                                  const std::vector<double>& text_mask,
                                  const std::vector<double>& roi_mask,
                                  const SingleStreamParams& params);

// Per-modality self-attention, then co-attention coupling; pooled is the
// elementwise product of the two modality poolers (CLS for text, masked mean
// for the ROIs).
StreamOutput dual_stream_encode(const Tensor& text_embed, const Tensor& visual_embed,
                                const std::vector<double>& text_mask,
                                const std::vector<double>& roi_mask,
                                const DualStreamParams& params);

}  // namespace cvl
