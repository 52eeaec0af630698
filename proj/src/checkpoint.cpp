#include "cvl/checkpoint.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "wire.hpp"

namespace cvl {

namespace {

using namespace cvl::wire;

constexpr char kCheckpointMagic[8] = {'C', 'V', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, CvlModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);

  const ModelConfig& c = model.config;
  put_u32(out, static_cast<std::uint32_t>(c.vocab_size));
  put_u32(out, static_cast<std::uint32_t>(c.hidden));
  put_u32(out, static_cast<std::uint32_t>(c.heads));
  put_u32(out, static_cast<std::uint32_t>(c.layers_single));
  put_u32(out, static_cast<std::uint32_t>(c.layers_text));
  put_u32(out, static_cast<std::uint32_t>(c.layers_visual));
  put_u32(out, static_cast<std::uint32_t>(c.layers_co));
  put_u32(out, static_cast<std::uint32_t>(c.max_tokens));
  put_u32(out, static_cast<std::uint32_t>(c.max_rois));
  put_u32(out, static_cast<std::uint32_t>(c.feature_dim));
  put_u32(out, static_cast<std::uint32_t>(c.ablation));
  put_u32(out, c.freeze_sembedding ? 1 : 0);

  const std::vector<std::string>& words = model.vocab.words();
  put_u64(out, words.size());
  for (const std::string& w : words) put_string(out, w);

  std::vector<NamedParam> params = named_parameters(model);
  put_u64(out, params.size());
  for (const NamedParam& p : params) {
    put_string(out, p.name);
    const Shape& shape = p.tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u64(out, d);
    put_f64s(out, p.tensor.data());
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

CvlModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() < 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error(path + ": not a checkpoint (bad magic)");
  const std::uint32_t version = get_u32(in, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));

  ModelConfig c;
  c.vocab_size = get_u32(in, path);
  c.hidden = get_u32(in, path);
  c.heads = get_u32(in, path);
  c.layers_single = get_u32(in, path);
  c.layers_text = get_u32(in, path);
  c.layers_visual = get_u32(in, path);
  c.layers_co = get_u32(in, path);
  c.max_tokens = get_u32(in, path);
  c.max_rois = get_u32(in, path);
  c.feature_dim = get_u32(in, path);
  const std::uint32_t ablation = get_u32(in, path);
  if (ablation > 2)
    throw std::runtime_error(path + ": invalid ablation tag " + std::to_string(ablation));
  c.ablation = static_cast<Ablation>(ablation);
  c.freeze_sembedding = get_u32(in, path) != 0;

  const std::uint64_t word_count = get_u64(in, path);
  std::vector<std::string> words;
  words.reserve(word_count);
  for (std::uint64_t i = 0; i < word_count; ++i) words.push_back(get_string(in, path));
  const Vocabulary vocab = Vocabulary::from_words(words);

  Rng init_rng(0);  // placeholder values, every blob is overwritten below
  CvlModel model = make_model(c, vocab, init_rng);

  struct Blob {
    Shape shape;
    std::vector<double> data;
  };
  std::map<std::string, Blob> blobs;
  const std::uint64_t param_count = get_u64(in, path);
  for (std::uint64_t i = 0; i < param_count; ++i) {
    const std::string name = get_string(in, path);
    const std::uint32_t ndim = get_u32(in, path);
    Blob blob;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      blob.shape.push_back(get_u64(in, path));
      numel *= blob.shape.back();
    }
    get_f64s(in, path, blob.data, numel);
    if (!blobs.emplace(name, std::move(blob)).second)
      throw std::runtime_error(path + ": duplicate parameter '" + name + "'");
  }

  std::vector<NamedParam> params = named_parameters(model);
  for (NamedParam& p : params) {
    auto it = blobs.find(p.name);
    if (it == blobs.end())
      throw std::runtime_error(path + ": missing parameter '" + p.name + "'");
    if (it->second.shape != p.tensor.shape())
      throw std::runtime_error(path + ": parameter '" + p.name + "' has shape " +
                               shape_str(it->second.shape) + ", config requires " +
                               shape_str(p.tensor.shape()));
    p.tensor.data() = std::move(it->second.data);
    blobs.erase(it);
  }
  if (!blobs.empty())
    throw std::runtime_error(path + ": unexpected parameter '" +
                             blobs.begin()->first + "'");
  return model;
}

}  // namespace cvl
