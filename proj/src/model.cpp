#include "cvl/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cvl {

Ablation ablation_from_string(const std::string& name) {
  if (name == "none") return Ablation::none;
  if (name == "text_only") return Ablation::text_only;
  if (name == "visual_only") return Ablation::visual_only;
  throw std::invalid_argument("unknown ablation '" + name +
                              "' (expected none, text_only, visual_only)");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::text_only: return "text_only";
    case Ablation::visual_only: return "visual_only";
  }
  return "none";
}

void ModelConfig::validate() const {
  if (vocab_size < kReservedTokens)
    throw std::invalid_argument("model config: vocab_size must cover reserved ids");
  if (hidden < 2 || heads == 0 || hidden % heads != 0)
    throw std::invalid_argument("model config: heads must divide hidden size");
  if (max_tokens < 3)
    throw std::invalid_argument("model config: max_tokens must be >= 3");
  if (max_rois == 0 || feature_dim == 0)
    throw std::invalid_argument("model config: max_rois and feature_dim must be positive");
}

CvlModel make_model(const ModelConfig& config, const Vocabulary& vocab, Rng& rng) {
  config.validate();
  if (vocab.size() != config.vocab_size)
    throw std::invalid_argument("model config: vocab_size " +
                                std::to_string(config.vocab_size) +
                                " does not match vocabulary (" +
                                std::to_string(vocab.size()) + ")");
  CvlModel m;
  m.config = config;
  m.vocab = vocab;
  m.embed_dual = make_embedding_params(config.vocab_size, config.max_tokens,
                                       config.feature_dim, config.hidden, rng,
                                       config.freeze_sembedding);
  m.embed_single = make_embedding_params(config.vocab_size, config.max_tokens,
                                         config.feature_dim, config.hidden, rng,
                                         config.freeze_sembedding);
  m.dual = make_dual_stream(config.hidden, config.heads, config.layers_text,
                            config.layers_visual, config.layers_co, rng);
  m.single = make_single_stream(config.hidden, config.heads, config.layers_single, rng);
  m.head_dual_w = Tensor::randn({config.hidden, 2}, rng, 0.02, true);
  m.head_dual_b = Tensor::zeros({2}, true);
  m.head_single_w = Tensor::randn({config.hidden, 2}, rng, 0.02, true);
  m.head_single_b = Tensor::zeros({2}, true);
  m.head_concat_w = Tensor::randn({2 * config.hidden, 2}, rng, 0.02, true);
  m.head_concat_b = Tensor::zeros({2}, true);
  return m;
}

namespace {

Tensor head(const Tensor& pooled, const Tensor& w, const Tensor& b) {
  return add(matmul(pooled, w), b);
}

double positive_probability(const Tensor& logits) {
  const double a = logits.data()[0], b = logits.data()[1];
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return eb / (ea + eb);
}

}  // namespace

ForwardOutput forward_sample(const MemeSample& sample, const CvlModel& model) {
  const ModelConfig& cfg = model.config;
  if (sample.tokens.token_ids.size() != cfg.max_tokens)
    throw std::invalid_argument("sample '" + sample.id + "': token length " +
                                std::to_string(sample.tokens.token_ids.size()) +
                                " does not match configured " +
                                std::to_string(cfg.max_tokens));
  if (sample.visual.roi_features.rows() != cfg.max_rois ||
      sample.visual.roi_features.cols() != cfg.feature_dim)
    throw std::invalid_argument("sample '" + sample.id + "': visual features " +
                                shape_str(sample.visual.roi_features.shape()) +
                                " do not match configured [" +
                                std::to_string(cfg.max_rois) + " x " +
                                std::to_string(cfg.feature_dim) + "]");

  auto fused_pair = [&](const EmbeddingParams& embed) {
    Tensor text = fuse_linguistic(sample.tokens, embed);
    Tensor visual = fuse_visual(sample.visual, embed);
    if (cfg.ablation == Ablation::text_only)
      visual = Tensor::zeros({cfg.max_rois, cfg.hidden});
    if (cfg.ablation == Ablation::visual_only)
      text = Tensor::zeros({cfg.max_tokens, cfg.hidden});
    return std::make_pair(std::move(text), std::move(visual));
  };

  auto [text_d, visual_d] = fused_pair(model.embed_dual);
  const StreamOutput dual = dual_stream_encode(text_d, visual_d, sample.tokens.attention_mask,
                                               sample.visual.roi_mask, model.dual);
  auto [text_s, visual_s] = fused_pair(model.embed_single);
  const StreamOutput single = single_stream_encode(text_s, visual_s,
                                                   sample.tokens.attention_mask,
                                                   sample.visual.roi_mask, model.single);

  ForwardOutput out;
  out.logits_dual = head(dual.pooled, model.head_dual_w, model.head_dual_b);
  out.logits_single = head(single.pooled, model.head_single_w, model.head_single_b);
  const Tensor three_way = concat_cols({dual.pooled, single.pooled});
  out.logits_concat = head(three_way, model.head_concat_w, model.head_concat_b);
  out.prob_hateful = positive_probability(out.logits_concat);
  return out;
}

std::vector<ForwardOutput> forward_batch(std::span<const MemeSample> batch,
                                         const CvlModel& model) {
  if (batch.empty())
    throw std::invalid_argument("forward_batch: empty batch");
  std::vector<ForwardOutput> outputs;
  outputs.reserve(batch.size());
  for (const MemeSample& s : batch) outputs.push_back(forward_sample(s, model));
  return outputs;
}

Tensor batch_loss(const std::vector<ForwardOutput>& outputs,
                  const std::vector<MemeSample>& batch) {
  if (outputs.empty() || outputs.size() != batch.size())
    throw std::invalid_argument("batch_loss: outputs and batch must align and be nonempty");
  Tensor total;
  bool first = true;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!batch[i].label)
      throw std::invalid_argument("batch_loss: sample '" + batch[i].id +
                                  "' has no label");
    const int y = *batch[i].label;
    Tensor sample_loss = add(add(cross_entropy(outputs[i].logits_dual, y),
                                 cross_entropy(outputs[i].logits_single, y)),
                             cross_entropy(outputs[i].logits_concat, y));
    total = first ? sample_loss : add(total, sample_loss);
    first = false;
  }
  return scale(total, 1.0 / static_cast<double>(outputs.size()));
}

double predict(const MemeSample& sample, const CvlModel& model) {
  return forward_sample(sample, model).prob_hateful;
}

namespace {

void collect(const std::string& name, const Tensor& t, ParamGroup group,
             std::vector<NamedParam>& out) {
  out.push_back({name, t, group, t.requires_grad()});
}

void collect(const std::string& prefix, const EmbeddingParams& p, ParamGroup g,
             std::vector<NamedParam>& out) {
  collect(prefix + ".token", p.token_table, g, out);
  collect(prefix + ".position", p.position_table, g, out);
  collect(prefix + ".segment", p.segment_table, g, out);
  collect(prefix + ".sembedding", p.sembedding_table, g, out);
  collect(prefix + ".roi_proj.w", p.roi_proj.weight, g, out);
  collect(prefix + ".roi_proj.b", p.roi_proj.bias, g, out);
  collect(prefix + ".ctx_proj.w", p.ctx_proj.weight, g, out);
  collect(prefix + ".ctx_proj.b", p.ctx_proj.bias, g, out);
  collect(prefix + ".box_proj.w", p.box_proj.weight, g, out);
  collect(prefix + ".box_proj.b", p.box_proj.bias, g, out);
}

void collect(const std::string& prefix, const LayerNormParams& p, ParamGroup g,
             std::vector<NamedParam>& out) {
  collect(prefix + ".gamma", p.gamma, g, out);
  collect(prefix + ".beta", p.beta, g, out);
}

void collect(const std::string& prefix, const AttentionParams& p, ParamGroup g,
             std::vector<NamedParam>& out) {
  collect(prefix + ".wq", p.wq, g, out);
  collect(prefix + ".bq", p.bq, g, out);
  collect(prefix + ".wk", p.wk, g, out);
  collect(prefix + ".bk", p.bk, g, out);
  collect(prefix + ".wv", p.wv, g, out);
  collect(prefix + ".bv", p.bv, g, out);
  collect(prefix + ".wo", p.wo, g, out);
  collect(prefix + ".bo", p.bo, g, out);
}

void collect(const std::string& prefix, const FeedForwardParams& p, ParamGroup g,
             std::vector<NamedParam>& out) {
  collect(prefix + ".w1", p.w1, g, out);
  collect(prefix + ".b1", p.b1, g, out);
  collect(prefix + ".w2", p.w2, g, out);
  collect(prefix + ".b2", p.b2, g, out);
}

void collect(const std::string& prefix, const SelfBlockParams& p, ParamGroup g,
             std::vector<NamedParam>& out) {
  collect(prefix + ".ln1", p.ln1, g, out);
  collect(prefix + ".ln2", p.ln2, g, out);
  collect(prefix + ".attn", p.attn, g, out);
  collect(prefix + ".ffn", p.ffn, g, out);
}

void collect(const std::string& prefix, const CoBlockParams& p, ParamGroup g,
             std::vector<NamedParam>& out) {
  collect(prefix + ".ln_x1", p.ln_x1, g, out);
  collect(prefix + ".ln_x2", p.ln_x2, g, out);
  collect(prefix + ".ln_y1", p.ln_y1, g, out);
  collect(prefix + ".ln_y2", p.ln_y2, g, out);
  collect(prefix + ".attn_x", p.attn_x, g, out);
  collect(prefix + ".attn_y", p.attn_y, g, out);
  collect(prefix + ".ffn_x", p.ffn_x, g, out);
  collect(prefix + ".ffn_y", p.ffn_y, g, out);
}

void collect(const std::string& prefix, const PoolerParams& p, ParamGroup g,
             std::vector<NamedParam>& out) {
  collect(prefix + ".w", p.w, g, out);
  collect(prefix + ".b", p.b, g, out);
}

}  // namespace

std::vector<NamedParam> named_parameters(CvlModel& model) {
  std::vector<NamedParam> out;
  collect("dual.embed", model.embed_dual, ParamGroup::dual_stream, out);
  for (std::size_t i = 0; i < model.dual.text_blocks.size(); ++i)
    collect("dual.text." + std::to_string(i), model.dual.text_blocks[i],
            ParamGroup::dual_stream, out);
  for (std::size_t i = 0; i < model.dual.visual_blocks.size(); ++i)
    collect("dual.visual." + std::to_string(i), model.dual.visual_blocks[i],
            ParamGroup::dual_stream, out);
  for (std::size_t i = 0; i < model.dual.co_blocks.size(); ++i)
    collect("dual.co." + std::to_string(i), model.dual.co_blocks[i],
            ParamGroup::dual_stream, out);
  collect("dual.text_pooler", model.dual.text_pooler, ParamGroup::dual_stream, out);
  collect("dual.visual_pooler", model.dual.visual_pooler, ParamGroup::dual_stream, out);

  collect("single.embed", model.embed_single, ParamGroup::single_stream, out);
  for (std::size_t i = 0; i < model.single.blocks.size(); ++i)
    collect("single." + std::to_string(i), model.single.blocks[i],
            ParamGroup::single_stream, out);
  collect("single.pooler", model.single.pooler, ParamGroup::single_stream, out);

  collect("head.dual.w", model.head_dual_w, ParamGroup::heads, out);
  collect("head.dual.b", model.head_dual_b, ParamGroup::heads, out);
  collect("head.single.w", model.head_single_w, ParamGroup::heads, out);
  collect("head.single.b", model.head_single_b, ParamGroup::heads, out);
  collect("head.concat.w", model.head_concat_w, ParamGroup::heads, out);
  collect("head.concat.b", model.head_concat_b, ParamGroup::heads, out);
  return out;
}

void randomize_parameters(CvlModel& model, Rng& rng, double weight_stddev,
                          double gamma_stddev) {
  for (NamedParam& p : named_parameters(model)) {
    if (!p.trainable) continue;
    const bool is_gamma =
        p.name.size() > 6 && p.name.rfind(".gamma") == p.name.size() - 6;
    for (double& x : p.tensor.data())
      x = is_gamma ? rng.normal(1.0, gamma_stddev) : rng.normal(0.0, weight_stddev);
  }
}

double model_grad_check(CvlModel& model, const std::vector<MemeSample>& batch,
                        std::size_t coords_per_param, Rng& rng) {
  std::vector<NamedParam> params = named_parameters(model);
  double max_err = 0.0;
  auto f = [&](std::vector<Tensor>& in) {
    (void)in;  // in aliases the live parameter tensors
    return batch_loss(forward_batch(batch, model), batch);
  };
  for (NamedParam& p : params) {
    if (!p.trainable) continue;
    std::vector<Tensor> inputs{p.tensor};
    max_err = std::max(max_err, grad_check(f, inputs, 1e-3, coords_per_param, &rng));
  }
  return max_err;
}

}  // namespace cvl
