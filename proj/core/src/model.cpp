#include "dvs2s/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dvs2s/numeric.hpp"

namespace dvs2s {

namespace {

void append_gru(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
                GruWeights& w) {
  out.emplace_back(prefix + ".wz", &w.wz);
  out.emplace_back(prefix + ".uz", &w.uz);
  out.emplace_back(prefix + ".wr", &w.wr);
  out.emplace_back(prefix + ".ur", &w.ur);
  out.emplace_back(prefix + ".wh", &w.wh);
  out.emplace_back(prefix + ".uh", &w.uh);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embeddings", &embeddings);
  append_gru(out, "enc_fwd", enc_fwd);
  append_gru(out, "enc_bwd", enc_bwd);
  append_gru(out, "dec", dec);
  out.emplace_back("attn_w", &attn_w);
  out.emplace_back("attn_v", &attn_v);
  out.emplace_back("proj_w", &proj_w);
  out.emplace_back("proj_b", &proj_b);
  out.emplace_back("pred_w", &pred_w);
  out.emplace_back("pred_b", &pred_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  auto mut = const_cast<ModelParams*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(name, t);
  return out;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

ModelParams init_model_params(const ModelDims& dims, uint64_t seed) {
  if (dims.hidden % 2 != 0)
    throw std::invalid_argument("init_model_params: hidden size must be even");
  ModelDims d = dims;
  if (d.attn <= 0) d.attn = d.hidden;

  const int64_t eh = d.enc_hidden();
  ModelParams p;
  p.dims = d;
  Rng rng(seed);
  auto mat = [&rng](int64_t r, int64_t c) {
    return init_tensor({r, c}, rng, InitScheme::XavierUniform);
  };
  auto gru = [&](int64_t h, int64_t in) {
    GruWeights w;
    w.wz = mat(h, in);
    w.uz = mat(h, h);
    w.wr = mat(h, in);
    w.ur = mat(h, h);
    w.wh = mat(h, in);
    w.uh = mat(h, h);
    return w;
  };
  p.embeddings = mat(d.vocab, d.embed);
  p.enc_fwd = gru(eh, d.embed);
  p.enc_bwd = gru(eh, d.embed);
  p.dec = gru(d.hidden, d.embed);
  p.attn_w = mat(d.attn, 2 * d.hidden);
  p.attn_v = init_tensor({d.attn}, rng, InitScheme::Zeros);
  // attn_v is rank-1 and would stay zero under the bias rule; give it the
  // same uniform treatment so attention scores are not identically zero.
  {
    const double a = std::sqrt(6.0 / static_cast<double>(d.attn + 1));
    for (double& v : p.attn_v.data) v = rng.uniform(-a, a);
  }
  p.proj_w = mat(d.vocab, d.proj_in());
  p.proj_b = init_tensor({d.vocab}, rng, InitScheme::Zeros);
  p.pred_w = mat(d.content, d.hidden);
  p.pred_b = init_tensor({d.content}, rng, InitScheme::Zeros);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.dims = p.dims;
  auto src = p.named();
  z.embeddings = zeros_like(p.embeddings);
  z.enc_fwd = {zeros_like(p.enc_fwd.wz), zeros_like(p.enc_fwd.uz), zeros_like(p.enc_fwd.wr),
               zeros_like(p.enc_fwd.ur), zeros_like(p.enc_fwd.wh), zeros_like(p.enc_fwd.uh)};
  z.enc_bwd = {zeros_like(p.enc_bwd.wz), zeros_like(p.enc_bwd.uz), zeros_like(p.enc_bwd.wr),
               zeros_like(p.enc_bwd.ur), zeros_like(p.enc_bwd.wh), zeros_like(p.enc_bwd.uh)};
  z.dec = {zeros_like(p.dec.wz), zeros_like(p.dec.uz), zeros_like(p.dec.wr),
           zeros_like(p.dec.ur), zeros_like(p.dec.wh), zeros_like(p.dec.uh)};
  z.attn_w = zeros_like(p.attn_w);
  z.attn_v = zeros_like(p.attn_v);
  z.proj_w = zeros_like(p.proj_w);
  z.proj_b = zeros_like(p.proj_b);
  z.pred_w = zeros_like(p.pred_w);
  z.pred_b = zeros_like(p.pred_b);
  return z;
}

void scale_params(ModelParams& p, double c) {
  for (Tensor* t : p.tensors())
    for (double& v : t->data) v *= c;
}

void add_scaled(ModelParams& dst, const ModelParams& src, double c) {
  auto d = dst.tensors();
  auto s = src.tensors();
  for (size_t i = 0; i < d.size(); ++i) {
    if (!d[i]->same_shape(*s[i])) throw_shape_mismatch("add_scaled");
    axpy(c, s[i]->data.data(), d[i]->data.data(), d[i]->size());
  }
}

double global_norm(const ModelParams& g) {
  double acc = 0.0;
  for (const Tensor* t : g.tensors())
    acc += dot_kernel(t->data.data(), t->data.data(), t->size());
  return std::sqrt(acc);
}

DynamicVocab DynamicVocab::full(int32_t vocab_size) {
  DynamicVocab d;
  d.selected.resize(static_cast<size_t>(vocab_size));
  std::iota(d.selected.begin(), d.selected.end(), 0);
  d.mask.assign(static_cast<size_t>(vocab_size), 1);
  return d;
}

DynamicVocab DynamicVocab::from_mask(std::vector<uint8_t> mask) {
  DynamicVocab d;
  d.mask = std::move(mask);
  for (size_t i = 0; i < d.mask.size(); ++i)
    if (d.mask[i]) d.selected.push_back(static_cast<int32_t>(i));
  if (d.selected.empty())
    throw std::invalid_argument("DynamicVocab: empty selection");
  return d;
}

DynamicVocab DynamicVocab::augmented_with(const std::vector<int32_t>& tokens) const {
  std::vector<uint8_t> m = mask;
  bool changed = false;
  for (int32_t id : tokens) {
    if (!m[static_cast<size_t>(id)]) {
      m[static_cast<size_t>(id)] = 1;
      changed = true;
    }
  }
  if (!changed) return *this;
  return from_mask(std::move(m));
}

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruWeights& w) {
  const int64_t h = w.wz.rows();
  if (w.wz.cols() != x.size() || w.uz.cols() != h_prev.size() || h_prev.size() != h)
    throw_shape_mismatch("gru_cell");

  Tensor z = Tensor::vec(h), tmp = Tensor::vec(h);
  matvec(w.wz, x.data.data(), z.data.data());
  matvec(w.uz, h_prev.data.data(), tmp.data.data());
  for (int64_t i = 0; i < h; ++i) z[i] = 1.0 / (1.0 + std::exp(-(z[i] + tmp[i])));

  Tensor r = Tensor::vec(h);
  matvec(w.wr, x.data.data(), r.data.data());
  matvec(w.ur, h_prev.data.data(), tmp.data.data());
  for (int64_t i = 0; i < h; ++i) r[i] = 1.0 / (1.0 + std::exp(-(r[i] + tmp[i])));

  Tensor rh = Tensor::vec(h);
  for (int64_t i = 0; i < h; ++i) rh[i] = r[i] * h_prev[i];
  Tensor cand = Tensor::vec(h);
  matvec(w.wh, x.data.data(), cand.data.data());
  matvec(w.uh, rh.data.data(), tmp.data.data());
  for (int64_t i = 0; i < h; ++i) cand[i] = std::tanh(cand[i] + tmp[i]);

  Tensor out = Tensor::vec(h);
  for (int64_t i = 0; i < h; ++i) out[i] = z[i] * cand[i] + (1.0 - z[i]) * h_prev[i];
  return out;
}

Encoding encode(const std::vector<int32_t>& message, const ModelParams& params) {
  if (message.empty()) throw std::invalid_argument("encode: empty message");
  const int64_t t = static_cast<int64_t>(message.size());
  const int64_t eh = params.dims.enc_hidden();
  const int64_t p = params.dims.embed;

  Encoding enc;
  enc.memory = Tensor::mat(t, 2 * eh);

  Tensor x = Tensor::vec(p);
  auto embed = [&](int32_t id) {
    std::copy(params.embeddings.row_ptr(id), params.embeddings.row_ptr(id) + p, x.data.begin());
  };

  Tensor h = Tensor::vec(eh);
  for (int64_t i = 0; i < t; ++i) {
    embed(message[static_cast<size_t>(i)]);
    h = gru_cell(x, h, params.enc_fwd);
    std::copy(h.data.begin(), h.data.end(), enc.memory.row_ptr(i));
  }
  h = Tensor::vec(eh);
  for (int64_t i = t - 1; i >= 0; --i) {
    embed(message[static_cast<size_t>(i)]);
    h = gru_cell(x, h, params.enc_bwd);
    std::copy(h.data.begin(), h.data.end(), enc.memory.row_ptr(i) + eh);
  }

  enc.final = Tensor::vec(2 * eh);
  std::copy(enc.memory.row_ptr(t - 1), enc.memory.row_ptr(t - 1) + 2 * eh,
            enc.final.data.begin());
  return enc;
}

DecodeContext::DecodeContext(const Encoding& enc, const ModelParams& params)
    : memory(&enc.memory) {
  const int64_t t = enc.memory.rows();
  const int64_t m = params.dims.hidden;
  attn_pre = Tensor::mat(t, params.dims.attn);
  for (int64_t j = 0; j < t; ++j)
    matvec_cols(params.attn_w, 0, m, enc.memory.row_ptr(j), attn_pre.row_ptr(j));
}

namespace {

// Shared attention core: scores from precomputed memory halves plus the
// decoder-side half, softmax, context.
std::pair<Tensor, Tensor> attention_with_pre(const Tensor& h_dec, const Tensor& memory,
                                             const Tensor& attn_pre,
                                             const ModelParams& params) {
  const int64_t t = memory.rows();
  const int64_t m = params.dims.hidden;
  const int64_t a = params.dims.attn;

  Tensor dec_half = Tensor::vec(a);
  matvec_cols(params.attn_w, m, 2 * m, h_dec.data.data(), dec_half.data.data());

  Tensor scores = Tensor::vec(t);
  Tensor u = Tensor::vec(a);
  for (int64_t j = 0; j < t; ++j) {
    const double* pre = attn_pre.row_ptr(j);
    for (int64_t i = 0; i < a; ++i) u[i] = std::tanh(pre[i] + dec_half[i]);
    scores[j] = dot_kernel(params.attn_v.data.data(), u.data.data(), a);
  }

  Tensor alpha = Tensor::vec(t);
  double mx = scores[0];
  for (int64_t j = 1; j < t; ++j) mx = std::max(mx, scores[j]);
  double denom = 0.0;
  for (int64_t j = 0; j < t; ++j) {
    alpha[j] = std::exp(scores[j] - mx);
    denom += alpha[j];
  }
  for (int64_t j = 0; j < t; ++j) alpha[j] /= denom;

  Tensor ctx = Tensor::vec(memory.cols());
  for (int64_t j = 0; j < t; ++j)
    axpy(alpha[j], memory.row_ptr(j), ctx.data.data(), memory.cols());
  return {std::move(ctx), std::move(alpha)};
}

}  // namespace

std::pair<Tensor, Tensor> attention(const Tensor& h_dec, const Tensor& memory,
                                    const ModelParams& params) {
  const int64_t t = memory.rows();
  const int64_t m = params.dims.hidden;
  Tensor pre = Tensor::mat(t, params.dims.attn);
  for (int64_t j = 0; j < t; ++j)
    matvec_cols(params.attn_w, 0, m, memory.row_ptr(j), pre.row_ptr(j));
  return attention_with_pre(h_dec, memory, pre, params);
}

std::pair<Tensor, Tensor> decode_step(int32_t y_prev, const Tensor& h_prev,
                                      const DecodeContext& ctx, const DynamicVocab& dyn,
                                      const ModelParams& params, OpCounter* counter) {
  if (dyn.selected.empty())
    throw std::invalid_argument("decode_step: empty dynamic vocabulary");
  const int64_t p = params.dims.embed;
  const int64_t m = params.dims.hidden;

  Tensor emb = Tensor::vec(p);
  std::copy(params.embeddings.row_ptr(y_prev), params.embeddings.row_ptr(y_prev) + p,
            emb.data.begin());

  Tensor h_new = gru_cell(emb, h_prev, params.dec);
  auto [context, alpha] = attention_with_pre(h_new, *ctx.memory, ctx.attn_pre, params);

  // Projection input [y_prev embedding ; h_prev ; c], scored only at the
  // selected rows. Note h_prev, not h_new: the restricted projection reads
  // the pre-update decoder state.
  Tensor u = Tensor::vec(p + 2 * m);
  std::copy(emb.data.begin(), emb.data.end(), u.data.begin());
  std::copy(h_prev.data.begin(), h_prev.data.end(), u.data.begin() + p);
  std::copy(context.data.begin(), context.data.end(), u.data.begin() + p + m);

  const auto n = static_cast<int64_t>(dyn.selected.size());
  Tensor scores = Tensor::vec(n);
  for (int64_t k = 0; k < n; ++k) {
    const int32_t row = dyn.selected[static_cast<size_t>(k)];
    scores[k] = dot_kernel(params.proj_w.row_ptr(row), u.data.data(), u.size()) +
                params.proj_b[row];
  }
  if (counter) counter->projection_macs += (m + p) * n;

  double mx = scores[0];
  for (int64_t k = 1; k < n; ++k) mx = std::max(mx, scores[k]);
  double denom = 0.0;
  Tensor dist = Tensor::vec(n);
  for (int64_t k = 0; k < n; ++k) {
    dist[k] = std::exp(scores[k] - mx);
    denom += dist[k];
  }
  for (int64_t k = 0; k < n; ++k) dist[k] /= denom;

  return {std::move(dist), std::move(h_new)};
}

std::pair<Tensor, Tensor> decode_step(int32_t y_prev, const Tensor& h_prev,
                                      const Tensor& memory, const DynamicVocab& dyn,
                                      const ModelParams& params) {
  Encoding view;
  view.memory = memory;  // context builder only reads the memory
  DecodeContext ctx(view, params);
  return decode_step(y_prev, h_prev, ctx, dyn, params, nullptr);
}

double sequence_log_prob(const std::vector<int32_t>& response, const Encoding& enc,
                         const DynamicVocab& dyn, const ModelParams& params) {
  if (response.empty())
    throw std::invalid_argument("sequence_log_prob: empty response");
  for (int32_t id : response)
    if (!dyn.contains(id))
      throw std::runtime_error("sequence_log_prob: response token " + std::to_string(id) +
                               " outside the dynamic vocabulary");

  DecodeContext ctx(enc, params);
  const int64_t p = params.dims.embed;
  const int64_t m = params.dims.hidden;
  const auto n = static_cast<int64_t>(dyn.selected.size());

  std::vector<int32_t> pos_of(dyn.mask.size(), -1);
  for (int64_t k = 0; k < n; ++k) pos_of[static_cast<size_t>(dyn.selected[static_cast<size_t>(k)])] =
      static_cast<int32_t>(k);

  Tensor h = enc.final;
  Tensor u = Tensor::vec(p + 2 * m);
  Tensor scores = Tensor::vec(n);
  int32_t prev = Vocabulary::kBos;
  double total = 0.0;
  for (int32_t y : response) {
    Tensor emb = Tensor::vec(p);
    std::copy(params.embeddings.row_ptr(prev), params.embeddings.row_ptr(prev) + p,
              emb.data.begin());
    Tensor h_new = gru_cell(emb, h, params.dec);
    auto [context, alpha] = attention_with_pre(h_new, *ctx.memory, ctx.attn_pre, params);

    std::copy(emb.data.begin(), emb.data.end(), u.data.begin());
    std::copy(h.data.begin(), h.data.end(), u.data.begin() + p);
    std::copy(context.data.begin(), context.data.end(), u.data.begin() + p + m);
    for (int64_t k = 0; k < n; ++k) {
      const int32_t row = dyn.selected[static_cast<size_t>(k)];
      scores[k] = dot_kernel(params.proj_w.row_ptr(row), u.data.data(), u.size()) +
                  params.proj_b[row];
    }
    const double lse = log_sum_exp(scores.data.data(), n);
    total += scores[pos_of[static_cast<size_t>(y)]] - lse;

    h = std::move(h_new);
    prev = y;
  }
  return total;
}

BernoulliParams predict_beta(const Encoding& enc, const ModelParams& params,
                             const Vocabulary& vocab, OpCounter* counter) {
  const auto& content = vocab.content_indices();
  BernoulliParams out;
  out.beta = Tensor::vec(vocab.size(), 1.0);  // function indices stay exactly 1

  if (!content.empty()) {
    Tensor logits = Tensor::vec(static_cast<int64_t>(content.size()));
    matvec(params.pred_w, enc.final.data.data(), logits.data.data());
    for (size_t c = 0; c < content.size(); ++c) {
      const double z = logits[static_cast<int64_t>(c)] + params.pred_b[static_cast<int64_t>(c)];
      out.beta[content[c]] = 1.0 / (1.0 + std::exp(-z));
    }
  }
  if (counter)
    counter->vocab_construction_macs += params.dims.hidden * static_cast<int64_t>(vocab.size());
  return out;
}

DynamicVocab sample_vocab(const BernoulliParams& beta, const Vocabulary& vocab, Rng& rng) {
  std::vector<uint8_t> mask = vocab.function_mask();
  for (int32_t id : vocab.content_indices())
    if (rng.bernoulli(beta.beta[id])) mask[static_cast<size_t>(id)] = 1;
  return DynamicVocab::from_mask(std::move(mask));
}

DynamicVocab top_k_vocab(const BernoulliParams& beta, int64_t k, const Vocabulary& vocab) {
  const auto& content = vocab.content_indices();
  if (k < 0 || k > static_cast<int64_t>(content.size()))
    throw std::invalid_argument("top_k_vocab: K out of range");

  std::vector<int32_t> order(content.begin(), content.end());
  std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (beta.beta[a] != beta.beta[b]) return beta.beta[a] > beta.beta[b];
    return a < b;
  });

  std::vector<uint8_t> mask = vocab.function_mask();
  for (int64_t i = 0; i < k; ++i) mask[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
  return DynamicVocab::from_mask(std::move(mask));
}

double vocab_log_prob(const DynamicVocab& dyn, const BernoulliParams& beta,
                      const Vocabulary& vocab, double clip) {
  double total = 0.0;
  for (int32_t id : vocab.content_indices()) {
    const double b = std::min(1.0 - clip, std::max(clip, beta.beta[id]));
    total += dyn.contains(id) ? std::log(b) : std::log(1.0 - b);
  }
  return total;
}

}  // namespace dvs2s
