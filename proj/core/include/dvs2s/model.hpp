#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dvs2s/rng.hpp"
#include "dvs2s/tensor.hpp"
#include "dvs2s/vocab.hpp"

namespace dvs2s {

struct ModelDims {
  int64_t vocab = 0;    // |V|
  int64_t content = 0;  // |V_c|
  int64_t embed = 0;    // p
  int64_t hidden = 0;   // m (decoder); each encoder direction uses m/2
  int64_t attn = 0;     // attention projection size, defaults to m

  int64_t enc_hidden() const { return hidden / 2; }
  int64_t proj_in() const { return embed + 2 * hidden; }
};

struct GruWeights {
  Tensor wz, uz, wr, ur, wh, uh;
};

// All trainable tensors. named() exposes them in a fixed order that defines
// the checkpoint layout and the optimizer slot order.
struct ModelParams {
  ModelDims dims;
  Tensor embeddings;  // |V| x p
  GruWeights enc_fwd;  // (m/2 x p), (m/2 x m/2)
  GruWeights enc_bwd;
  GruWeights dec;      // (m x p), (m x m)
  Tensor attn_w;       // a x 2m
  Tensor attn_v;       // a
  Tensor proj_w;       // |V| x (p + 2m)
  Tensor proj_b;       // |V|
  Tensor pred_w;       // |V_c| x m
  Tensor pred_b;       // |V_c|

  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

// Xavier-uniform matrices, zero biases, deterministic under seed. The
// projection and predictor weights follow the same scheme; tests that need
// zero projections overwrite them explicitly.
ModelParams init_model_params(const ModelDims& dims, uint64_t seed);
ModelParams zeros_like(const ModelParams& p);

void scale_params(ModelParams& p, double c);
void add_scaled(ModelParams& dst, const ModelParams& src, double c);
double global_norm(const ModelParams& g);

// Per-input decoding vocabulary: the selected subset of V as both a sorted
// index list and a bit mask.
struct DynamicVocab {
  std::vector<int32_t> selected;
  std::vector<uint8_t> mask;

  static DynamicVocab full(int32_t vocab_size);
  static DynamicVocab from_mask(std::vector<uint8_t> mask);
  bool contains(int32_t id) const { return mask[static_cast<size_t>(id)] != 0; }
  int64_t size() const { return static_cast<int64_t>(selected.size()); }
  // Same vocabulary with the given tokens forced in (used to keep training
  // likelihoods finite when a sample misses response words).
  DynamicVocab augmented_with(const std::vector<int32_t>& tokens) const;
};

// Per-word inclusion probabilities; exactly 1.0 at every function index.
struct BernoulliParams {
  Tensor beta;  // |V|
};

struct Encoding {
  Tensor memory;  // t x m, row i = [fwd_i ; bwd_i]
  Tensor final;   // size m, equals the last memory row
};

// h = z (*) cand + (1 - z) (*) h_prev with
//   z = sigmoid(Wz x + Uz h_prev), r = sigmoid(Wr x + Ur h_prev),
//   cand = tanh(Wh x + Uh (r (*) h_prev)); no bias terms.
Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruWeights& w);

Encoding encode(const std::vector<int32_t>& message, const ModelParams& params);

// Bahdanau-style scores e_j = v . tanh(Wa [h_j ; h_dec]); returns the context
// and the attention weights.
std::pair<Tensor, Tensor> attention(const Tensor& h_dec, const Tensor& memory,
                                    const ModelParams& params);

// Precomputed per-message state for repeated decode steps: the memory-side
// halves of the attention scores, computed once.
struct DecodeContext {
  const Tensor* memory = nullptr;
  Tensor attn_pre;  // t x a, row j = Wa[:, :m] h_j

  DecodeContext() = default;
  DecodeContext(const Encoding& enc, const ModelParams& params);
};

// Counts multiply-accumulates in the units of the decoding cost model:
// (m + p) per scored word in the projection, m * |V| per dynamic-vocabulary
// construction. Incremented exactly, never sampled.
struct OpCounter {
  int64_t projection_macs = 0;
  int64_t vocab_construction_macs = 0;
  int64_t total() const { return projection_macs + vocab_construction_macs; }
};

// One decoder step: advances the GRU state, attends, scores only the selected
// words (the restricted projection uses the pre-update state h_prev), and
// returns the distribution over dyn.selected plus the new state.
std::pair<Tensor, Tensor> decode_step(int32_t y_prev, const Tensor& h_prev,
                                      const DecodeContext& ctx, const DynamicVocab& dyn,
                                      const ModelParams& params, OpCounter* counter = nullptr);
std::pair<Tensor, Tensor> decode_step(int32_t y_prev, const Tensor& h_prev,
                                      const Tensor& memory, const DynamicVocab& dyn,
                                      const ModelParams& params);

// Sum over response positions of log p(y_l | y_<l, T, X); the decoder starts
// from enc.final with <s> as the first input. Every response token must be
// selected in dyn.
double sequence_log_prob(const std::vector<int32_t>& response, const Encoding& enc,
                         const DynamicVocab& dyn, const ModelParams& params);

// beta = sigmoid(Wc h_t + bc) at content indices, exactly 1 at function
// indices.
BernoulliParams predict_beta(const Encoding& enc, const ModelParams& params,
                             const Vocabulary& vocab, OpCounter* counter = nullptr);

// Independent Bernoulli draw per content word; function words always in.
DynamicVocab sample_vocab(const BernoulliParams& beta, const Vocabulary& vocab, Rng& rng);

// All function words plus the K content words of largest beta, ties broken by
// lower index.
DynamicVocab top_k_vocab(const BernoulliParams& beta, int64_t k, const Vocabulary& vocab);

// log p(T | X) over content indices with beta clipped to [clip, 1 - clip];
// function indices contribute zero.
double vocab_log_prob(const DynamicVocab& dyn, const BernoulliParams& beta,
                      const Vocabulary& vocab, double clip = 1e-7);

}  // namespace dvs2s
