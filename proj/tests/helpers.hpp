#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dvs2s/corpus.hpp"
#include "dvs2s/model.hpp"
#include "dvs2s/rng.hpp"

namespace dvs2s::test {

// Specials + n_function extra function words + n_content content words.
inline Vocabulary tiny_vocab(int n_function, int n_content) {
  Vocabulary v;
  for (int i = 0; i < n_function; ++i)
    v.append({"f" + std::to_string(i), 100, WordClass::Function});
  for (int i = 0; i < n_content; ++i)
    v.append({"c" + std::to_string(i), 50, WordClass::Content});
  return v;
}

inline ModelParams tiny_params(const Vocabulary& vocab, int64_t embed, int64_t hidden,
                               uint64_t seed) {
  ModelDims d;
  d.vocab = vocab.size();
  d.content = static_cast<int64_t>(vocab.content_indices().size());
  d.embed = embed;
  d.hidden = hidden;
  d.attn = hidden;
  return init_model_params(d, seed);
}

inline std::vector<int32_t> random_tokens(const Vocabulary& vocab, int len, Rng& rng,
                                          bool end_with_eos) {
  std::vector<int32_t> out;
  for (int i = 0; i < len; ++i)
    out.push_back(static_cast<int32_t>(
        Vocabulary::kNumSpecials +
        rng.below(static_cast<uint64_t>(vocab.size() - Vocabulary::kNumSpecials))));
  if (end_with_eos) out.push_back(Vocabulary::kEos);
  return out;
}

// All 2^{|V_c|} vocabularies (function words always selected).
inline std::vector<DynamicVocab> all_content_subsets(const Vocabulary& vocab) {
  const auto& content = vocab.content_indices();
  const auto n = content.size();
  std::vector<DynamicVocab> out;
  out.reserve(static_cast<size_t>(1) << n);
  for (uint64_t bits = 0; bits < (static_cast<uint64_t>(1) << n); ++bits) {
    std::vector<uint8_t> mask = vocab.function_mask();
    for (size_t c = 0; c < n; ++c)
      if (bits & (static_cast<uint64_t>(1) << c)) mask[static_cast<size_t>(content[c])] = 1;
    out.push_back(DynamicVocab::from_mask(std::move(mask)));
  }
  return out;
}

// Independent Bernoulli weight of a selection: product over content words of
// beta or (1 - beta), computed directly from the probabilities.
inline double subset_weight(const DynamicVocab& dyn, const BernoulliParams& beta,
                            const Vocabulary& vocab) {
  double w = 1.0;
  for (int32_t id : vocab.content_indices())
    w *= dyn.contains(id) ? beta.beta[id] : 1.0 - beta.beta[id];
  return w;
}

// Reference static decoder step written independently of the model code:
// dense scores over the whole vocabulary, plain softmax, no masking path.
inline std::vector<double> reference_static_step(int32_t y_prev, const Tensor& h_prev,
                                                 const Encoding& enc,
                                                 const ModelParams& params) {
  const int64_t p = params.dims.embed;
  const int64_t m = params.dims.hidden;
  const int64_t a = params.dims.attn;
  const int64_t t = enc.memory.rows();
  const int64_t v = params.dims.vocab;

  std::vector<double> emb(params.embeddings.row_ptr(y_prev),
                          params.embeddings.row_ptr(y_prev) + p);

  // GRU (direct formula evaluation).
  std::vector<double> h_new(static_cast<size_t>(m));
  {
    auto mv = [&](const Tensor& w, const std::vector<double>& x) {
      std::vector<double> y(static_cast<size_t>(w.rows()), 0.0);
      for (int64_t i = 0; i < w.rows(); ++i)
        for (int64_t j = 0; j < w.cols(); ++j)
          y[static_cast<size_t>(i)] += w.at(i, j) * x[static_cast<size_t>(j)];
      return y;
    };
    std::vector<double> hp(h_prev.data.begin(), h_prev.data.end());
    auto az = mv(params.dec.wz, emb), bz = mv(params.dec.uz, hp);
    auto ar = mv(params.dec.wr, emb), br = mv(params.dec.ur, hp);
    std::vector<double> z(static_cast<size_t>(m)), r(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
      z[static_cast<size_t>(i)] =
          1.0 / (1.0 + std::exp(-(az[static_cast<size_t>(i)] + bz[static_cast<size_t>(i)])));
      r[static_cast<size_t>(i)] =
          1.0 / (1.0 + std::exp(-(ar[static_cast<size_t>(i)] + br[static_cast<size_t>(i)])));
    }
    std::vector<double> rh(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i)
      rh[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] * hp[static_cast<size_t>(i)];
    auto ah = mv(params.dec.wh, emb), bh = mv(params.dec.uh, rh);
    for (int64_t i = 0; i < m; ++i) {
      const double cand =
          std::tanh(ah[static_cast<size_t>(i)] + bh[static_cast<size_t>(i)]);
      h_new[static_cast<size_t>(i)] =
          z[static_cast<size_t>(i)] * cand +
          (1.0 - z[static_cast<size_t>(i)]) * hp[static_cast<size_t>(i)];
    }
  }

  // Attention.
  std::vector<double> ctx(static_cast<size_t>(m), 0.0);
  {
    std::vector<double> scores(static_cast<size_t>(t), 0.0);
    for (int64_t j = 0; j < t; ++j) {
      double e = 0.0;
      for (int64_t i = 0; i < a; ++i) {
        double u = 0.0;
        for (int64_t c = 0; c < m; ++c) u += params.attn_w.at(i, c) * enc.memory.at(j, c);
        for (int64_t c = 0; c < m; ++c)
          u += params.attn_w.at(i, m + c) * h_new[static_cast<size_t>(c)];
        e += params.attn_v[i] * std::tanh(u);
      }
      scores[static_cast<size_t>(j)] = e;
    }
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double denom = 0.0;
    std::vector<double> alpha(static_cast<size_t>(t));
    for (int64_t j = 0; j < t; ++j) {
      alpha[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
      denom += alpha[static_cast<size_t>(j)];
    }
    for (int64_t j = 0; j < t; ++j)
      for (int64_t c = 0; c < m; ++c)
        ctx[static_cast<size_t>(c)] +=
            alpha[static_cast<size_t>(j)] / denom * enc.memory.at(j, c);
  }

  // Dense projection over all of V, then softmax.
  std::vector<double> scores(static_cast<size_t>(v), 0.0);
  for (int64_t k = 0; k < v; ++k) {
    double s = params.proj_b[k];
    for (int64_t j = 0; j < p; ++j) s += params.proj_w.at(k, j) * emb[static_cast<size_t>(j)];
    for (int64_t j = 0; j < m; ++j)
      s += params.proj_w.at(k, p + j) * h_prev[j];
    for (int64_t j = 0; j < m; ++j)
      s += params.proj_w.at(k, p + m + j) * ctx[static_cast<size_t>(j)];
    scores[static_cast<size_t>(k)] = s;
  }
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double denom = 0.0;
  for (double s : scores) denom += std::exp(s - mx);
  std::vector<double> dist(static_cast<size_t>(v));
  for (int64_t k = 0; k < v; ++k)
    dist[static_cast<size_t>(k)] = std::exp(scores[static_cast<size_t>(k)] - mx) / denom;
  return dist;
}

// Exhaustive search over all token sequences from dyn that finish with </s>
// within max_len steps, scored by chaining decode_step; the reference for the
// beam-search oracle. Ties resolved like the beam: higher score, shorter, lex.
struct OracleBest {
  std::vector<int32_t> tokens;
  double log_prob = -std::numeric_limits<double>::infinity();
  bool set = false;
};

inline void oracle_extend(const Encoding& enc, const DynamicVocab& dyn,
                          const ModelParams& params, std::vector<int32_t>& prefix,
                          double lp, const Tensor& state, int max_len, OracleBest& best) {
  if (static_cast<int>(prefix.size()) >= max_len) return;
  const int32_t prev = prefix.empty() ? Vocabulary::kBos : prefix.back();
  auto [dist, h_new] = decode_step(prev, state, enc.memory, dyn, params);
  for (int64_t k = 0; k < dist.size(); ++k) {
    const int32_t token = dyn.selected[static_cast<size_t>(k)];
    if (dist[k] <= 0.0) continue;
    const double next_lp = lp + std::log(dist[k]);
    prefix.push_back(token);
    if (token == Vocabulary::kEos) {
      const bool better =
          !best.set || next_lp > best.log_prob ||
          (next_lp == best.log_prob &&
           (prefix.size() < best.tokens.size() ||
            (prefix.size() == best.tokens.size() && prefix < best.tokens)));
      if (better) {
        best.tokens = prefix;
        best.log_prob = next_lp;
        best.set = true;
      }
    } else {
      oracle_extend(enc, dyn, params, prefix, next_lp, h_new, max_len, best);
    }
    prefix.pop_back();
  }
}

}  // namespace dvs2s::test
