#include "cvl/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace cvl {

namespace {

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

void require_unmasked(const std::vector<double>& mask, const char* where) {
  for (double m : mask)
    if (m != 0.0) return;
  throw std::invalid_argument(std::string(where) + ": all positions are masked");
}

Tensor mask_bias(const std::vector<double>& mask) {
  std::vector<double> bias(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    bias[i] = mask[i] != 0.0 ? 0.0 : kMaskSentinel;
  return Tensor::from_data({mask.size()}, std::move(bias));
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  return affine(gelu(affine(x, p.w1, p.b1)), p.w2, p.b2);
}

}  // namespace

LayerNormParams make_layer_norm(std::size_t hidden) {
  return {Tensor::full({hidden}, 1.0, true), Tensor::zeros({hidden}, true)};
}

AttentionParams make_attention(std::size_t hidden, std::size_t heads, Rng& rng) {
  if (heads == 0 || hidden % heads != 0)
    throw std::invalid_argument("attention: head count " + std::to_string(heads) +
                                " must divide hidden size " + std::to_string(hidden));
  AttentionParams p;
  p.wq = Tensor::randn({hidden, hidden}, rng, 0.02, true);
  p.bq = Tensor::zeros({hidden}, true);
  p.wk = Tensor::randn({hidden, hidden}, rng, 0.02, true);
  p.bk = Tensor::zeros({hidden}, true);
  p.wv = Tensor::randn({hidden, hidden}, rng, 0.02, true);
  p.bv = Tensor::zeros({hidden}, true);
  p.wo = Tensor::randn({hidden, hidden}, rng, 0.02, true);
  p.bo = Tensor::zeros({hidden}, true);
  p.heads = heads;
  return p;
}

FeedForwardParams make_feed_forward(std::size_t hidden, Rng& rng) {
  FeedForwardParams p;
  p.w1 = Tensor::randn({hidden, 4 * hidden}, rng, 0.02, true);
  p.b1 = Tensor::zeros({4 * hidden}, true);
  p.w2 = Tensor::randn({4 * hidden, hidden}, rng, 0.02, true);
  p.b2 = Tensor::zeros({hidden}, true);
  return p;
}

SelfBlockParams make_self_block(std::size_t hidden, std::size_t heads, Rng& rng) {
  return {make_layer_norm(hidden), make_layer_norm(hidden),
          make_attention(hidden, heads, rng), make_feed_forward(hidden, rng)};
}

CoBlockParams make_co_block(std::size_t hidden, std::size_t heads, Rng& rng) {
  CoBlockParams p;
  p.ln_x1 = make_layer_norm(hidden);
  p.ln_x2 = make_layer_norm(hidden);
  p.ln_y1 = make_layer_norm(hidden);
  p.ln_y2 = make_layer_norm(hidden);
  p.attn_x = make_attention(hidden, heads, rng);
  p.attn_y = make_attention(hidden, heads, rng);
  p.ffn_x = make_feed_forward(hidden, rng);
  p.ffn_y = make_feed_forward(hidden, rng);
  return p;
}

PoolerParams make_pooler(std::size_t hidden, Rng& rng) {
  return {Tensor::randn({hidden, hidden}, rng, 0.02, true),
          Tensor::zeros({hidden}, true)};
}

SingleStreamParams make_single_stream(std::size_t hidden, std::size_t heads,
                                      std::size_t layers, Rng& rng) {
  SingleStreamParams p;
  for (std::size_t i = 0; i < layers; ++i)
    p.blocks.push_back(make_self_block(hidden, heads, rng));
  p.pooler = make_pooler(hidden, rng);
  return p;
}

DualStreamParams make_dual_stream(std::size_t hidden, std::size_t heads,
                                  std::size_t text_layers, std::size_t visual_layers,
                                  std::size_t co_layers, Rng& rng) {
  DualStreamParams p;
  for (std::size_t i = 0; i < text_layers; ++i)
    p.text_blocks.push_back(make_self_block(hidden, heads, rng));
  for (std::size_t i = 0; i < visual_layers; ++i)
    p.visual_blocks.push_back(make_self_block(hidden, heads, rng));
  for (std::size_t i = 0; i < co_layers; ++i)
    p.co_blocks.push_back(make_co_block(hidden, heads, rng));
  p.text_pooler = make_pooler(hidden, rng);
  p.visual_pooler = make_pooler(hidden, rng);
  return p;
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                            const std::vector<double>& kv_mask,
                            const AttentionParams& params) {
  require_unmasked(kv_mask, "multi_head_attention");
  const std::size_t hidden = queries.cols();
  const std::size_t heads = params.heads;
  const std::size_t dk = hidden / heads;
  const Tensor q = affine(queries, params.wq, params.bq);
  const Tensor k = affine(keys_values, params.wk, params.bk);
  const Tensor v = affine(keys_values, params.wv, params.bv);
  const Tensor bias = mask_bias(kv_mask);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dk, dk);
    const Tensor kh = slice_cols(k, h * dk, dk);
    const Tensor vh = slice_cols(v, h * dk, dk);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    scores = add(scores, bias);
    head_outputs.push_back(matmul(softmax(scores, -1), vh));
  }
  const Tensor merged = heads == 1 ? head_outputs.front() : concat_cols(head_outputs);
  return affine(merged, params.wo, params.bo);
}

Tensor self_attention_block(const Tensor& x, const std::vector<double>& mask,
                            const SelfBlockParams& params) {
  require_unmasked(mask, "self_attention_block");
  const Tensor normed = layer_norm(x, params.ln1.gamma, params.ln1.beta);
  const Tensor attended = add(x, multi_head_attention(normed, normed, mask, params.attn));
  const Tensor normed2 = layer_norm(attended, params.ln2.gamma, params.ln2.beta);
  return add(attended, feed_forward(normed2, params.ffn));
}

std::pair<Tensor, Tensor> co_attention_block(const Tensor& x, const Tensor& y,
                                             const std::vector<double>& x_mask,
                                             const std::vector<double>& y_mask,
                                             const CoBlockParams& params) {
  require_unmasked(x_mask, "co_attention_block");
  require_unmasked(y_mask, "co_attention_block");
  // Both directions read the pre-update inputs.
  const Tensor xn = layer_norm(x, params.ln_x1.gamma, params.ln_x1.beta);
  const Tensor yn = layer_norm(y, params.ln_y1.gamma, params.ln_y1.beta);
  const Tensor x_att = add(x, multi_head_attention(xn, yn, y_mask, params.attn_x));
  const Tensor y_att = add(y, multi_head_attention(yn, xn, x_mask, params.attn_y));
  const Tensor xn2 = layer_norm(x_att, params.ln_x2.gamma, params.ln_x2.beta);
  const Tensor yn2 = layer_norm(y_att, params.ln_y2.gamma, params.ln_y2.beta);
  return {add(x_att, feed_forward(xn2, params.ffn_x)),
          add(y_att, feed_forward(yn2, params.ffn_y))};
}

namespace {

Tensor pool(const Tensor& row, const PoolerParams& p) {
  return tanh_op(affine(row, p.w, p.b));
}

Tensor masked_mean_rows(const Tensor& x, const std::vector<double>& mask) {
  double count = 0.0;
  for (double m : mask) count += (m != 0.0 ? 1.0 : 0.0);
  std::vector<double> weights(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    weights[i] = mask[i] != 0.0 ? 1.0 / count : 0.0;
  return matmul(Tensor::from_data({1, mask.size()}, std::move(weights)), x);
}

}  // namespace

StreamOutput single_stream_encode(const Tensor& text_embed, const Tensor& visual_embed,
                                  const std::vector<double>& text_mask,
                                  const std::vector<double>& roi_mask,
                                  const SingleStreamParams& params) {
  const std::size_t t = text_embed.rows(), r = visual_embed.rows();
  Tensor x = concat_rows({text_embed, visual_embed});
  std::vector<double> mask = text_mask;
  mask.insert(mask.end(), roi_mask.begin(), roi_mask.end());
  for (const SelfBlockParams& block : params.blocks)
    x = self_attention_block(x, mask, block);
  StreamOutput out;
  out.text_hidden = slice_rows(x, 0, t);
  out.visual_hidden = slice_rows(x, t, r);
  out.pooled = pool(slice_rows(x, 0, 1), params.pooler);
  return out;
}

StreamOutput dual_stream_encode(const Tensor& text_embed, const Tensor& visual_embed,
                                const std::vector<double>& text_mask,
                                const std::vector<double>& roi_mask,
                                const DualStreamParams& params) {
  Tensor t = text_embed;
  Tensor v = visual_embed;
  for (const SelfBlockParams& block : params.text_blocks)
    t = self_attention_block(t, text_mask, block);
  for (const SelfBlockParams& block : params.visual_blocks)
    v = self_attention_block(v, roi_mask, block);
  for (const CoBlockParams& block : params.co_blocks)
    std::tie(t, v) = co_attention_block(t, v, text_mask, roi_mask, block);
  StreamOutput out;
  out.text_hidden = t;
  out.visual_hidden = v;
  const Tensor text_pooled = pool(slice_rows(t, 0, 1), params.text_pooler);
  const Tensor visual_pooled = pool(masked_mean_rows(v, roi_mask), params.visual_pooler);
  out.pooled = mul(text_pooled, visual_pooled);
  return out;
}

}  // namespace cvl
