#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cvl/checkpoint.hpp"
#include "cvl/model.hpp"
#include "cvl/train.hpp"

using namespace cvl;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  ModelConfig config;
  Vocabulary vocab;
  std::vector<MemeSample> samples;

  explicit Fixture(std::size_t n = 8, std::uint64_t seed = 5) {
    SynthSpec spec = default_synth_spec(n, seed);
    spec.max_tokens = 10;
    spec.rois = 4;
    spec.d_v = 8;
    spec.filler_vocab = 12;
    redraw_prototypes(spec, 1234);
    const SynthOutput out = synth_generate(spec);

    vocab = Vocabulary::from_words(out.vocab_words);
    config.vocab_size = vocab.size();
    config.hidden = 16;
    config.heads = 2;
    config.layers_single = 1;
    config.layers_text = 1;
    config.layers_visual = 1;
    config.layers_co = 1;
    config.max_tokens = spec.max_tokens;
    config.max_rois = spec.rois;
    config.feature_dim = spec.d_v;

    KeywordSources sources{&out.keywords, nullptr, nullptr};
    samples = build_samples(out.dataset, out.features, sources, vocab,
                            config.max_tokens, config.max_rois);
  }

  CvlModel model(std::uint64_t seed = 3) const {
    Rng rng(seed);
    return make_model(config, vocab, rng);
  }
};

}  // namespace

TEST_CASE("zero heads give uniform logits and probability one half") {
  Fixture fx;
  CvlModel model = fx.model();
  model.head_dual_w = Tensor::zeros({fx.config.hidden, 2}, true);
  model.head_single_w = Tensor::zeros({fx.config.hidden, 2}, true);
  model.head_concat_w = Tensor::zeros({2 * fx.config.hidden, 2}, true);

  const ForwardOutput out = forward_sample(fx.samples[0], model);
  CHECK(out.logits_dual.data() == std::vector<double>{0, 0});
  CHECK(out.logits_single.data() == std::vector<double>{0, 0});
  CHECK(out.logits_concat.data() == std::vector<double>{0, 0});
  CHECK(out.prob_hateful == 0.5);
  CHECK(predict(fx.samples[0], model) == 0.5);
}

TEST_CASE("batch outputs are per-sample independent and reorder with the batch") {
  Fixture fx;
  CvlModel model = fx.model();
  const auto outputs = forward_batch(fx.samples, model);
  std::vector<MemeSample> reversed(fx.samples.rbegin(), fx.samples.rend());
  const auto routputs = forward_batch(reversed, model);
  for (std::size_t i = 0; i < fx.samples.size(); ++i) {
    CHECK(outputs[i].prob_hateful ==
          routputs[fx.samples.size() - 1 - i].prob_hateful);
    CHECK(outputs[i].logits_concat.data() ==
          routputs[fx.samples.size() - 1 - i].logits_concat.data());
  }
  CHECK_THROWS_AS(forward_batch({}, model), std::invalid_argument);
}

TEST_CASE("concat logits respond to either stream") {
  Fixture fx;
  CvlModel base = fx.model();
  const ForwardOutput out0 = forward_sample(fx.samples[0], base);

  CvlModel poke_dual = fx.model();
  poke_dual.dual.text_pooler.w.data()[0] += 0.5;
  const ForwardOutput out1 = forward_sample(fx.samples[0], poke_dual);
  CHECK(out1.logits_concat.data() != out0.logits_concat.data());

  CvlModel poke_single = fx.model();
  poke_single.single.pooler.w.data()[0] += 0.5;
  const ForwardOutput out2 = forward_sample(fx.samples[0], poke_single);
  CHECK(out2.logits_concat.data() != out0.logits_concat.data());
}

TEST_CASE("loss: uniform heads give 3 ln 2, and loss is nonnegative") {
  Fixture fx;
  CvlModel model = fx.model();
  model.head_dual_w = Tensor::zeros({fx.config.hidden, 2}, true);
  model.head_single_w = Tensor::zeros({fx.config.hidden, 2}, true);
  model.head_concat_w = Tensor::zeros({2 * fx.config.hidden, 2}, true);

  const auto outputs = forward_batch(fx.samples, model);
  const Tensor loss = batch_loss(outputs, fx.samples);
  CHECK(loss.item() == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));

  CvlModel random_model = fx.model(11);
  const Tensor loss2 = batch_loss(forward_batch(fx.samples, random_model), fx.samples);
  CHECK(loss2.item() >= 0.0);

  std::vector<MemeSample> unlabeled = fx.samples;
  unlabeled[1].label.reset();
  CHECK_THROWS_AS(batch_loss(forward_batch(unlabeled, random_model), unlabeled),
                  std::invalid_argument);
}

TEST_CASE("predict is monotone in the positive concat logit") {
  Fixture fx;
  CvlModel model = fx.model();
  double prev = predict(fx.samples[0], model);
  for (int i = 0; i < 4; ++i) {
    model.head_concat_b.data()[1] += 0.75;
    const double next = predict(fx.samples[0], model);
    CHECK(next > prev);
    prev = next;
  }
}

TEST_CASE("batch predict equals per-sample predict") {
  Fixture fx;
  CvlModel model = fx.model(9);
  const auto outputs = forward_batch(fx.samples, model);
  for (std::size_t i = 0; i < fx.samples.size(); ++i)
    CHECK(std::fabs(outputs[i].prob_hateful - predict(fx.samples[i], model)) <= 1e-12);
}

TEST_CASE("head independence: auxiliary heads change loss but not the prediction") {
  Fixture fx;
  CvlModel model = fx.model(13);
  const double prob = predict(fx.samples[2], model);
  const double loss = batch_loss(forward_batch(fx.samples, model), fx.samples).item();

  model.head_dual_w = Tensor::zeros({fx.config.hidden, 2}, true);
  model.head_dual_b = Tensor::zeros({2}, true);
  model.head_single_w = Tensor::zeros({fx.config.hidden, 2}, true);
  model.head_single_b = Tensor::zeros({2}, true);
  CHECK(predict(fx.samples[2], model) == prob);
  CHECK(batch_loss(forward_batch(fx.samples, model), fx.samples).item() != loss);
}

TEST_CASE("dimension mismatches are config errors") {
  Fixture fx;
  CvlModel model = fx.model();
  MemeSample bad = fx.samples[0];
  bad.tokens.token_ids.push_back(kPadId);
  bad.tokens.symbols.push_back(0);
  bad.tokens.attention_mask.push_back(0.0);
  bad.tokens.surfaces.push_back("");
  CHECK_THROWS_AS(forward_sample(bad, model), std::invalid_argument);

  MemeSample bad2 = fx.samples[0];
  bad2.visual.roi_features = Tensor::zeros({fx.config.max_rois, fx.config.feature_dim + 1});
  CHECK_THROWS_AS(forward_sample(bad2, model), std::invalid_argument);
}

TEST_CASE("ablations silence exactly one modality") {
  Fixture fx;
  CvlModel model = fx.model(21);

  // visual-only: token content stops mattering (mask held fixed)
  CvlModel visual_only = fx.model(21);
  visual_only.config.ablation = Ablation::visual_only;
  MemeSample altered = fx.samples[0];
  altered.tokens.token_ids[1] = kMaskId;  // different id, same length/mask
  altered.tokens.symbols[1] = kSymbolKeyword;
  CHECK(predict(altered, visual_only) == predict(fx.samples[0], visual_only));
  CHECK(predict(altered, model) != predict(fx.samples[0], model));

  // text-only: visual changes stop mattering
  CvlModel text_only = fx.model(21);
  text_only.config.ablation = Ablation::text_only;
  MemeSample altered2 = fx.samples[0];
  altered2.visual = fx.samples[1].visual;
  altered2.visual.roi_mask = fx.samples[0].visual.roi_mask;
  CHECK(predict(altered2, text_only) == predict(fx.samples[0], text_only));
  CHECK(predict(altered2, model) != predict(fx.samples[0], model));
}

TEST_CASE("full model gradients match finite differences") {
  Fixture fx(4, 15);
  CvlModel model = fx.model(17);
  Rng scale_rng(5);
  randomize_parameters(model, scale_rng);
  std::vector<MemeSample> two(fx.samples.begin(), fx.samples.begin() + 2);
  Rng rng(99);
  CHECK(model_grad_check(model, two, 4, rng) <= 1e-4);
}

TEST_CASE("checkpoint round trip reproduces outputs bitwise") {
  Fixture fx;
  CvlModel model = fx.model(23);
  const fs::path dir = fs::temp_directory_path() / ("cvl_model_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  const std::string path2 = (dir / "model2.ckpt").string();

  save_checkpoint(path, model);
  CvlModel loaded = load_checkpoint(path);
  for (const MemeSample& s : fx.samples)
    CHECK(predict(s, loaded) == predict(s, model));

  // write -> read -> write byte identity
  save_checkpoint(path2, loaded);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::ostringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());

  // malformed: bad magic, wrong shape
  {
    std::ofstream junk(path2, std::ios::binary);
    junk << "NOTACKPTxxxxxxxxxxxx";
  }
  CHECK_THROWS_AS(load_checkpoint(path2), std::runtime_error);

  CvlModel other = fx.model(23);
  other.config.hidden = 32;  // stored config now disagrees with blob shapes
  const std::string path3 = (dir / "model3.ckpt").string();
  save_checkpoint(path3, other);
  try {
    load_checkpoint(path3);
    FAIL("expected shape validation error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("vocabulary round trips through the checkpoint") {
  Fixture fx;
  CvlModel model = fx.model(29);
  const fs::path dir = fs::temp_directory_path() / ("cvl_vocab_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, model);
  const CvlModel loaded = load_checkpoint(path);
  CHECK(loaded.vocab.words() == model.vocab.words());
  CHECK(loaded.vocab.id_of(model.vocab.words()[0]) ==
        model.vocab.id_of(model.vocab.words()[0]));
  fs::remove_all(dir);
}

TEST_CASE("fifty steps of overfitting halve the loss") {
  Fixture fx(6, 33);
  CvlModel model = fx.model(31);
  TrainConfig cfg;
  cfg.batch_size = fx.samples.size();  // one repeated batch
  cfg.lr_dual = 3e-3;
  cfg.lr_single = 3e-3;
  cfg.warmup_steps = 0;
  cfg.total_steps = 50;
  cfg.log_every = 50;
  Rng rng(7);
  const TrainResult result = train(model, fx.samples, nullptr, cfg, rng);
  CHECK(result.last_loss <= 0.5 * result.first_loss);
}
