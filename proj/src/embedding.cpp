#include "cvl/embedding.hpp"

#include <stdexcept>

namespace cvl {

namespace {

Projection make_projection(std::size_t in_dim, std::size_t hidden, Rng& rng) {
  return {Tensor::randn({in_dim, hidden}, rng, 0.02, true),
          Tensor::zeros({hidden}, true)};
}

Tensor apply(const Projection& p, const Tensor& x) {
  return add(matmul(x, p.weight), p.bias);
}

}  // namespace

EmbeddingParams make_embedding_params(std::size_t vocab_size, std::size_t max_tokens,
                                      std::size_t d_v, std::size_t hidden, Rng& rng,
                                      bool freeze_sembedding) {
  EmbeddingParams p;
  p.token_table = Tensor::randn({vocab_size, hidden}, rng, 0.02, true);
  p.position_table = Tensor::randn({max_tokens, hidden}, rng, 0.02, true);
  p.segment_table = Tensor::randn({2, hidden}, rng, 0.02, true);
  p.sembedding_table = freeze_sembedding
                           ? Tensor::zeros({kSymbolCount, hidden}, false)
                           : Tensor::randn({kSymbolCount, hidden}, rng, 0.02, true);
  p.roi_proj = make_projection(d_v, hidden, rng);
  p.ctx_proj = make_projection(d_v, hidden, rng);
  p.box_proj = make_projection(4, hidden, rng);
  return p;
}

Tensor fuse_visual(const VisualFeatures& vf, const EmbeddingParams& params) {
  const Tensor rois = apply(params.roi_proj, vf.roi_features);     // [R x H]
  const Tensor boxes = apply(params.box_proj, vf.boxes);           // [R x H]
  const Tensor ctx = apply(params.ctx_proj, vf.contextual);        // [1 x H]
  const Tensor ctx_row = reshape(ctx, {ctx.cols()});
  Tensor fused = add(add(rois, boxes), ctx_row);
  return scale_rows(fused, vf.roi_mask);
}

Tensor fuse_linguistic(const TokenizedText& tokens, const EmbeddingParams& params) {
  const std::size_t t = tokens.token_ids.size();
  std::vector<int> positions(t), segments(t, 0);
  for (std::size_t i = 0; i < t; ++i) positions[i] = static_cast<int>(i);
  const Tensor tok = embedding_lookup(params.token_table, tokens.token_ids);
  const Tensor pos = embedding_lookup(params.position_table, positions);
  const Tensor seg = embedding_lookup(params.segment_table, segments);
  const Tensor sem = embedding_lookup(params.sembedding_table, tokens.symbols);
  return add(add(add(tok, pos), seg), sem);
}

}  // namespace cvl
