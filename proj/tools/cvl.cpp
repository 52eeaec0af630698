#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "cvl/checkpoint.hpp"
#include "cvl/config.hpp"
#include "cvl/train.hpp"

namespace fs = std::filesystem;
using namespace cvl;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

void add_run_flags(CLI::App* cmd, const std::shared_ptr<Overrides>& overrides,
                   const std::vector<std::string>& keys) {
  for (const std::string& key : keys) {
    cmd->add_option_function<std::string>(
        "--" + key,
        [overrides, key](const std::string& value) {
          overrides->emplace_back(key, value);
        },
        "config key " + key);
  }
}

RunConfig load_run_config(const std::string& config_path, const Overrides& overrides) {
  RunConfig rc;
  if (!config_path.empty()) apply_config_file(rc, config_path);
  for (const auto& [key, value] : overrides) rc.apply(key, value);
  return rc;
}

void require_input(const char* key, const std::string& path) {
  if (path.empty())
    throw std::invalid_argument(std::string("config: ") + key + " is required");
  if (!fs::exists(path))
    throw std::invalid_argument(std::string("config: ") + key + " '" + path +
                                "' does not exist");
}

void require_output(const char* key, const std::string& path) {
  if (path.empty())
    throw std::invalid_argument(std::string("config: ") + key + " is required");
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw std::invalid_argument(std::string("config: ") + key + " '" + path +
                                "': directory does not exist");
}

void optional_input(const char* key, const std::string& path) {
  if (!path.empty()) require_input(key, path);
}

struct KeywordSetup {
  std::optional<KeywordFile> file;
  std::optional<std::set<std::string>> nouns;
  std::optional<std::set<std::string>> stops;

  KeywordSources sources() const {
    KeywordSources s;
    if (file) s.file = &*file;
    if (nouns) s.noun_lexicon = &*nouns;
    if (stops) s.stopwords = &*stops;
    return s;
  }
};

KeywordSetup load_keyword_setup(const RunConfig& rc, const std::string& keyword_path) {
  KeywordSetup setup;
  if (!keyword_path.empty()) setup.file = load_keywords(keyword_path);
  if (!rc.noun_lexicon.empty()) setup.nouns = load_lexicon(rc.noun_lexicon);
  if (!rc.stopwords.empty()) setup.stops = load_lexicon(rc.stopwords);
  return setup;
}

std::vector<MemeSample> load_split(const RunConfig& rc, const ModelConfig& mc,
                                   const Vocabulary& vocab, const std::string& data_path,
                                   const std::string& features_path,
                                   const std::string& keywords_path) {
  const std::vector<DatasetRecord> dataset = load_dataset(data_path);
  const FeatureSet features = load_features(features_path);
  const KeywordSetup setup = load_keyword_setup(rc, keywords_path);
  return build_samples(dataset, features, setup.sources(), vocab, mc.max_tokens,
                       mc.max_rois);
}

int run_train(const RunConfig& rc) {
  require_input("train_data", rc.train_data);
  require_input("train_features", rc.train_features);
  require_output("checkpoint", rc.checkpoint);
  optional_input("train_keywords", rc.train_keywords);
  optional_input("vocab", rc.vocab);
  optional_input("noun_lexicon", rc.noun_lexicon);
  optional_input("stopwords", rc.stopwords);
  if (!rc.val_data.empty()) {
    require_input("val_data", rc.val_data);
    require_input("val_features", rc.val_features);
    optional_input("val_keywords", rc.val_keywords);
  }
  if (!rc.trace.empty()) require_output("trace", rc.trace);
  rc.train.validate();

  const std::vector<DatasetRecord> dataset = load_dataset(rc.train_data);
  Vocabulary vocab;
  if (!rc.vocab.empty()) {
    vocab = Vocabulary::from_words(load_lexicon_list(rc.vocab));
  } else {
    std::vector<std::string> texts;
    texts.reserve(dataset.size());
    for (const DatasetRecord& rec : dataset) texts.push_back(rec.text);
    vocab = Vocabulary::from_texts(texts, rc.max_vocab);
  }

  ModelConfig mc = rc.model;
  mc.vocab_size = vocab.size();
  mc.validate();

  const FeatureSet features = load_features(rc.train_features);
  const KeywordSetup kw = load_keyword_setup(rc, rc.train_keywords);
  const std::vector<MemeSample> samples = build_samples(
      dataset, features, kw.sources(), vocab, mc.max_tokens, mc.max_rois);

  std::optional<std::vector<MemeSample>> val;
  if (!rc.val_data.empty())
    val = load_split(rc, mc, vocab, rc.val_data, rc.val_features, rc.val_keywords);

  Rng rng(rc.train.seed);
  CvlModel model = make_model(mc, vocab, rng);

  std::ofstream trace_file;
  std::ostream* trace = &std::cout;
  if (!rc.trace.empty()) {
    trace_file.open(rc.trace);
    if (!trace_file) throw std::runtime_error(rc.trace + ": cannot open for writing");
    trace = &trace_file;
  }
  const auto on_checkpoint = [&](std::size_t step) {
    save_checkpoint(rc.checkpoint + ".step" + std::to_string(step), model);
  };

  const TrainResult result =
      train(model, samples, val ? &*val : nullptr, rc.train, rng, trace,
            rc.train.checkpoint_every > 0 ? on_checkpoint
                                          : std::function<void(std::size_t)>{});
  save_checkpoint(rc.checkpoint, model);
  std::cout << "trained " << rc.train.total_steps << " steps, final loss "
            << format_double(result.last_loss) << ", checkpoint " << rc.checkpoint
            << "\n";
  return 0;
}

int run_predict(const RunConfig& rc) {
  require_input("checkpoint", rc.checkpoint);
  require_input("data", rc.data);
  require_input("features", rc.features);
  require_output("predictions", rc.predictions);
  optional_input("keywords", rc.keywords);
  optional_input("noun_lexicon", rc.noun_lexicon);
  optional_input("stopwords", rc.stopwords);

  CvlModel model = load_checkpoint(rc.checkpoint);
  const std::vector<MemeSample> samples =
      load_split(rc, model.config, model.vocab, rc.data, rc.features, rc.keywords);
  save_predictions(rc.predictions, predict_all(samples, model));
  std::cout << "wrote " << samples.size() << " predictions to " << rc.predictions
            << "\n";
  return 0;
}

int run_eval(const RunConfig& rc) {
  PredictionSet preds;
  if (!rc.predictions.empty() && rc.checkpoint.empty()) {
    require_input("predictions", rc.predictions);
    preds = load_predictions(rc.predictions);
  } else {
    require_input("checkpoint", rc.checkpoint);
    require_input("data", rc.data);
    require_input("features", rc.features);
    optional_input("keywords", rc.keywords);
    CvlModel model = load_checkpoint(rc.checkpoint);
    const std::vector<MemeSample> samples =
        load_split(rc, model.config, model.vocab, rc.data, rc.features, rc.keywords);
    preds = predict_all(samples, model);
  }
  std::cout << format_metrics(compute_metrics(preds)) << "\n";
  return 0;
}

int run_ensemble(const std::string& out, const std::vector<std::string>& inputs) {
  require_output("output", out);
  std::vector<PredictionSet> sets;
  sets.reserve(inputs.size());
  for (const std::string& path : inputs) {
    require_input("input", path);
    sets.push_back(load_predictions(path));
  }
  save_predictions(out, ensemble_average(sets));
  std::cout << "averaged " << sets.size() << " prediction sets into " << out << "\n";
  return 0;
}

struct GenDataArgs {
  std::string out, features, keywords, vocab_out;
  std::size_t n = 2000;
  std::uint64_t seed = 7;
  std::uint64_t proto_seed = 1234;
  double sigma = 0.1;
  double positive_rate = 0.5;
  std::size_t rois = 8;
  std::size_t feature_dim = 32;
  std::size_t max_tokens = 24;
  std::size_t filler_vocab = 40;
  std::string keyword_channel = "token";
  bool features_text = false;
};

int run_gen_data(const GenDataArgs& args) {
  require_output("out", args.out);
  require_output("features", args.features);
  require_output("keywords", args.keywords);
  if (!args.vocab_out.empty()) require_output("vocab-out", args.vocab_out);

  SynthSpec spec = default_synth_spec(args.n, args.seed, args.proto_seed);
  spec.noise = args.sigma;
  spec.positive_rate = args.positive_rate;
  spec.rois = args.rois;
  spec.d_v = args.feature_dim;
  spec.max_tokens = args.max_tokens;
  spec.filler_vocab = args.filler_vocab;
  if (args.keyword_channel == "token")
    spec.keyword_channel_file_only = false;
  else if (args.keyword_channel == "file_only")
    spec.keyword_channel_file_only = true;
  else
    throw std::invalid_argument("gen-data: keyword-channel must be token or file_only");
  redraw_prototypes(spec, args.proto_seed);

  const SynthOutput out = synth_generate(spec);
  save_dataset(args.out, out.dataset);
  if (args.features_text)
    save_features_text(args.features, out.features);
  else
    save_features(args.features, out.features);
  save_keywords(args.keywords, out.keywords);
  if (!args.vocab_out.empty()) save_lexicon(args.vocab_out, out.vocab_words);
  std::cout << "generated " << out.dataset.size() << " samples (" << args.out << ")\n";
  return 0;
}

int run_extract_keywords(const std::string& data, const std::string& nouns,
                         const std::string& stopwords, const std::string& out) {
  require_input("data", data);
  require_input("noun-lexicon", nouns);
  if (!stopwords.empty()) require_input("stopwords", stopwords);
  require_output("out", out);

  const std::vector<DatasetRecord> dataset = load_dataset(data);
  const std::set<std::string> noun_set = load_lexicon(nouns);
  const std::set<std::string> stop_set =
      stopwords.empty() ? std::set<std::string>{} : load_lexicon(stopwords);
  KeywordFile file;
  for (const DatasetRecord& rec : dataset)
    file.emplace(rec.id, extract_keywords(rec.text, noun_set, stop_set));
  save_keywords(out, file);
  std::cout << "wrote keywords for " << file.size() << " samples to " << out << "\n";
  return 0;
}

// Condensed per-op suite plus the full toy-config model loss.
int run_gradcheck(std::uint64_t seed) {
  double worst = 0.0;
  auto weighted = [](const Tensor& t, const std::vector<double>& w) {
    return sum(mul(t, Tensor::from_data(t.shape(), std::vector<double>(w))));
  };

  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(seed + trial);
    const std::size_t m = 2 + rng.below(6), k = 2 + rng.below(6), h = 2 + rng.below(6);
    std::vector<double> w(m * h);
    for (double& x : w) x = rng.normal();

    {
      Tensor a = Tensor::randn({m, k}, rng, 1.0);
      Tensor b = Tensor::randn({k, h}, rng, 1.0);
      std::vector<Tensor> in{a, b};
      auto f = [&](std::vector<Tensor>& v) { return weighted(matmul(v[0], v[1]), w); };
      worst = std::max(worst, grad_check(f, in));
    }
    {
      Tensor a = Tensor::randn({m, h}, rng, 1.0);
      Tensor b = Tensor::randn({h}, rng, 1.0);
      std::vector<Tensor> in{a, b};
      auto f = [&](std::vector<Tensor>& v) {
        return weighted(gelu(mul(add(v[0], v[1]), v[0])), w);
      };
      worst = std::max(worst, grad_check(f, in));
    }
    {
      Tensor x = Tensor::randn({m, h}, rng, 1.0);
      Tensor g = Tensor::randn({h}, rng, 0.3);
      Tensor b = Tensor::randn({h}, rng, 0.3);
      std::vector<Tensor> in{x, g, b};
      auto f = [&](std::vector<Tensor>& v) {
        return weighted(softmax(layer_norm(v[0], v[1], v[2]), -1), w);
      };
      worst = std::max(worst, grad_check(f, in));
    }
    {
      Tensor logits = Tensor::randn({2}, rng, 1.0);
      std::vector<Tensor> in{logits};
      auto f = [](std::vector<Tensor>& v) { return cross_entropy(v[0], 1); };
      worst = std::max(worst, grad_check(f, in));
    }
  }

  // full CVL loss on the toy configuration
  SynthSpec spec = default_synth_spec(2, seed);
  const SynthOutput data = synth_generate(spec);
  const Vocabulary vocab = Vocabulary::from_words(data.vocab_words);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  KeywordSources sources;
  sources.file = &data.keywords;
  const std::vector<MemeSample> samples =
      build_samples(data.dataset, data.features, sources, vocab, mc.max_tokens,
                    mc.max_rois);
  Rng rng(seed);
  CvlModel model = make_model(mc, vocab, rng);
  randomize_parameters(model, rng);
  Rng coord_rng(seed + 1);
  worst = std::max(worst, model_grad_check(model, samples, 3, coord_rng));

  std::cout << "max relative error " << format_double(worst) << "\n";
  if (worst > 1e-4) {
    std::cerr << "error: gradient check failed (tolerance 1e-4)\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Complementary visual-linguistic meme classifier"};
  app.require_subcommand(1);
  int status = 0;

  const std::vector<std::string> model_keys = {
      "hidden", "heads", "layers_single", "layers_text", "layers_visual",
      "layers_co", "max_tokens", "max_rois", "feature_dim", "ablation",
      "freeze_sembedding", "max_vocab"};
  const std::vector<std::string> train_keys = {
      "seed", "batch_size", "lr_dual", "lr_single", "warmup_steps", "total_steps",
      "augment_prob", "log_every", "eval_every", "checkpoint_every"};

  // train
  {
    auto* cmd = app.add_subcommand("train", "Train a CVL model");
    auto config_path = std::make_shared<std::string>();
    auto overrides = std::make_shared<Overrides>();
    cmd->add_option("--config", *config_path, "flat key=value config file");
    add_run_flags(cmd, overrides, model_keys);
    add_run_flags(cmd, overrides, train_keys);
    add_run_flags(cmd, overrides,
                  {"train_data", "train_features", "train_keywords", "val_data",
                   "val_features", "val_keywords", "vocab", "noun_lexicon",
                   "stopwords", "checkpoint", "trace"});
    cmd->callback([config_path, overrides, &status] {
      status = run_train(load_run_config(*config_path, *overrides));
    });
  }
  // predict
  {
    auto* cmd = app.add_subcommand("predict", "Write a prediction file for a dataset");
    auto config_path = std::make_shared<std::string>();
    auto overrides = std::make_shared<Overrides>();
    cmd->add_option("--config", *config_path, "flat key=value config file");
    add_run_flags(cmd, overrides,
                  {"checkpoint", "data", "features", "keywords", "noun_lexicon",
                   "stopwords", "predictions"});
    cmd->callback([config_path, overrides, &status] {
      status = run_predict(load_run_config(*config_path, *overrides));
    });
  }
  // eval
  {
    auto* cmd = app.add_subcommand(
        "eval", "Report accuracy/AUROC for a prediction file or a checkpoint");
    auto config_path = std::make_shared<std::string>();
    auto overrides = std::make_shared<Overrides>();
    cmd->add_option("--config", *config_path, "flat key=value config file");
    add_run_flags(cmd, overrides,
                  {"predictions", "checkpoint", "data", "features", "keywords",
                   "noun_lexicon", "stopwords"});
    cmd->callback([config_path, overrides, &status] {
      status = run_eval(load_run_config(*config_path, *overrides));
    });
  }
  // ensemble
  {
    auto* cmd = app.add_subcommand("ensemble", "Average prediction files");
    auto out = std::make_shared<std::string>();
    auto inputs = std::make_shared<std::vector<std::string>>();
    cmd->add_option("-o,--out", *out, "output prediction file")->required();
    cmd->add_option("inputs", *inputs, "input prediction files")->required();
    cmd->callback([out, inputs, &status] { status = run_ensemble(*out, *inputs); });
  }
  // gen-data
  {
    auto* cmd = app.add_subcommand("gen-data", "Generate a synthetic benchmark");
    auto args = std::make_shared<GenDataArgs>();
    cmd->add_option("--out", args->out, "dataset JSONL path")->required();
    cmd->add_option("--features", args->features, "feature container path")->required();
    cmd->add_option("--keywords", args->keywords, "keyword file path")->required();
    cmd->add_option("--vocab-out", args->vocab_out, "vocabulary list path");
    cmd->add_option("--n", args->n, "sample count");
    cmd->add_option("--seed", args->seed, "sample seed");
    cmd->add_option("--proto-seed", args->proto_seed,
                    "prototype seed (shared across splits)");
    cmd->add_option("--sigma", args->sigma, "contextual noise stddev");
    cmd->add_option("--positive-rate", args->positive_rate, "label balance target");
    cmd->add_option("--rois", args->rois, "ROIs per sample");
    cmd->add_option("--feature-dim", args->feature_dim, "visual feature dimension");
    cmd->add_option("--max-tokens", args->max_tokens, "token budget");
    cmd->add_option("--filler-vocab", args->filler_vocab, "filler word count");
    cmd->add_option("--keyword-channel", args->keyword_channel,
                    "token | file_only (keyword bit via vocabulary or keyword file)");
    cmd->add_flag("--features-text", args->features_text,
                  "write the JSONL feature variant instead of binary");
    cmd->callback([args, &status] { status = run_gen_data(*args); });
  }
  // extract-keywords
  {
    auto* cmd = app.add_subcommand("extract-keywords",
                                   "Write a keyword file from a dataset and lexicons");
    auto data = std::make_shared<std::string>();
    auto nouns = std::make_shared<std::string>();
    auto stops = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--data", *data, "dataset JSONL path")->required();
    cmd->add_option("--noun-lexicon", *nouns, "noun word list")->required();
    cmd->add_option("--stopwords", *stops, "stopword list");
    cmd->add_option("--out", *out, "keyword file path")->required();
    cmd->callback([data, nouns, stops, out, &status] {
      status = run_extract_keywords(*data, *nouns, *stops, *out);
    });
  }
  // gradcheck
  {
    auto* cmd = app.add_subcommand("gradcheck", "Run the gradient suite");
    auto seed = std::make_shared<std::uint64_t>(7);
    cmd->add_option("--seed", *seed, "random seed");
    cmd->callback([seed, &status] { status = run_gradcheck(*seed); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
