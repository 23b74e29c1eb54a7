#include "dvs2s/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dvs2s {

namespace {

constexpr char kMagic[] = "DVS2S1";

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void put_le64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

uint64_t get_le64(std::istream& in) {
  char b[8];
  in.read(b, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

void write_config(std::ostream& out, const TrainConfig& c) {
  out << "config embed " << c.embed << '\n';
  out << "config hidden " << c.hidden << '\n';
  out << "config attn " << c.attn << '\n';
  out << "config mc_samples " << c.mc_samples << '\n';
  out << "config batch_size " << c.batch_size << '\n';
  out << "config lr " << fmt_double(c.lr) << '\n';
  out << "config baseline_decay " << fmt_double(c.baseline_decay) << '\n';
  out << "config max_epochs " << c.max_epochs << '\n';
  out << "config pretrain_epochs " << c.pretrain_epochs << '\n';
  out << "config predictor_epochs " << c.predictor_epochs << '\n';
  out << "config seed " << c.seed << '\n';
  out << "config topk_content " << c.topk_content << '\n';
  out << "config beta_clip " << fmt_double(c.beta_clip) << '\n';
  out << "config grad_clip " << fmt_double(c.grad_clip) << '\n';
}

void apply_config(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "embed") c.embed = std::stoll(value);
  else if (key == "hidden") c.hidden = std::stoll(value);
  else if (key == "attn") c.attn = std::stoll(value);
  else if (key == "mc_samples") c.mc_samples = std::stoi(value);
  else if (key == "batch_size") c.batch_size = std::stoi(value);
  else if (key == "lr") c.lr = std::stod(value);
  else if (key == "baseline_decay") c.baseline_decay = std::stod(value);
  else if (key == "max_epochs") c.max_epochs = std::stoi(value);
  else if (key == "pretrain_epochs") c.pretrain_epochs = std::stoi(value);
  else if (key == "predictor_epochs") c.predictor_epochs = std::stoi(value);
  else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "topk_content") c.topk_content = std::stoll(value);
  else if (key == "beta_clip") c.beta_clip = std::stod(value);
  else if (key == "grad_clip") c.grad_clip = std::stod(value);
  else throw std::runtime_error("checkpoint: unknown config key '" + key + "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainConfig& config, uint64_t vocab_digest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);

  out << kMagic << '\n';
  write_config(out, config);
  out << "dims vocab " << params.dims.vocab << '\n';
  out << "dims content " << params.dims.content << '\n';
  out << "dims embed " << params.dims.embed << '\n';
  out << "dims hidden " << params.dims.hidden << '\n';
  out << "dims attn " << params.dims.attn << '\n';
  out << "vocab_digest " << vocab_digest << '\n';
  for (const auto& [name, t] : params.named()) {
    out << "tensor " << name << " 8 " << t->shape.size();
    for (int64_t d : t->shape) out << ' ' << d;
    out << '\n';
  }
  out << "data\n";
  for (const auto& [name, t] : params.named()) {
    for (double v : t->data) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_le64(out, bits);
    }
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);

  Checkpoint ck;
  struct TensorHead {
    std::string name;
    std::vector<int64_t> shape;
  };
  std::vector<TensorHead> heads;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "config") {
      std::string key, value;
      ls >> key >> value;
      apply_config(ck.config, key, value);
    } else if (kind == "dims") {
      std::string key;
      int64_t v;
      ls >> key >> v;
      if (key == "vocab") ck.params.dims.vocab = v;
      else if (key == "content") ck.params.dims.content = v;
      else if (key == "embed") ck.params.dims.embed = v;
      else if (key == "hidden") ck.params.dims.hidden = v;
      else if (key == "attn") ck.params.dims.attn = v;
      else throw std::runtime_error("load_checkpoint: unknown dims key '" + key + "'");
    } else if (kind == "vocab_digest") {
      ls >> ck.vocab_digest;
    } else if (kind == "tensor") {
      TensorHead h;
      int width = 0;
      size_t ndim = 0;
      ls >> h.name >> width >> ndim;
      if (width != 8)
        throw std::runtime_error("load_checkpoint: unsupported element width");
      h.shape.resize(ndim);
      for (auto& d : h.shape) ls >> d;
      heads.push_back(std::move(h));
    } else {
      throw std::runtime_error("load_checkpoint: unexpected header line '" + line + "'");
    }
  }

  // Materialize tensors with the recorded shapes, then check the name list
  // matches the model layout.
  ModelDims d = ck.params.dims;
  ck.params = init_model_params(d, 0);
  scale_params(ck.params, 0.0);
  auto named = ck.params.named();
  if (named.size() != heads.size())
    throw std::runtime_error("load_checkpoint: tensor count mismatch");
  for (size_t i = 0; i < heads.size(); ++i) {
    if (named[i].first != heads[i].name)
      throw std::runtime_error("load_checkpoint: tensor order mismatch at '" +
                               heads[i].name + "'");
    Tensor& t = *named[i].second;
    if (t.shape != heads[i].shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + heads[i].name + "'");
    for (double& v : t.data) {
      const uint64_t bits = get_le64(in);
      std::memcpy(&v, &bits, 8);
    }
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated payload");
  return ck;
}

}  // namespace dvs2s
