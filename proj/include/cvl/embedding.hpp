#pragma once

#include "cvl/tensor.hpp"
#include "cvl/text.hpp"

namespace cvl {

// Per-sample visual inputs. Tensors are untracked constants; rows past
// roi_mask's support are all-zero.
struct VisualFeatures {
  Tensor roi_features;           // [R x d_v]
  Tensor boxes;                  // [R x 4], corners normalized to [0, 1]
  Tensor contextual;             // [1 x d_v]
  std::vector<double> roi_mask;  // length R, 1 = real ROI
};

struct Projection {
  Tensor weight;  // [in x H]
  Tensor bias;    // [H]
};

struct EmbeddingParams {
  Tensor token_table;       // [V x H]
  Tensor position_table;    // [T_max x H]
  Tensor segment_table;     // [2 x H]
  Tensor sembedding_table;  // [3 x H]
  Projection roi_proj;      // d_v -> H
  Projection ctx_proj;      // d_v -> H
  Projection box_proj;      // 4 -> H
};

EmbeddingParams make_embedding_params(std::size_t vocab_size, std::size_t max_tokens,
                                      std::size_t d_v, std::size_t hidden, Rng& rng,
                                      bool freeze_sembedding = false);

// Fused visual embedding: every ROI row is its projected feature plus the
// (broadcast) projected whole-image feature plus its projected box corners.
// Masked rows come out exactly zero.
Tensor fuse_visual(const VisualFeatures& vf, const EmbeddingParams& params);

// Fused linguistic embedding: token + position + segment + Sembedding
// lookups summed per position. PAD rows stay populated; attention masks
// exclude them downstream.
Tensor fuse_linguistic(const TokenizedText& tokens, const EmbeddingParams& params);

}  // namespace cvl
