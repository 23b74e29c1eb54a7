#include "dvs2s/model_graph.hpp"

#include <stdexcept>

namespace dvs2s {

ModelGraph::ModelGraph(const ModelParams& params, bool needs_grad) : params_(params) {
  auto named = params.named();
  leaves_.reserve(named.size());
  for (auto& [name, t] : named) leaves_.push_back(tape_.leaf(*t, needs_grad));

  // Order matches ModelParams::named(): embeddings, enc_fwd, enc_bwd, dec,
  // attention, projection, predictor.
  size_t i = 0;
  embeddings_ = leaves_[i++];
  auto take_gru = [&]() {
    GruLeaves g;
    g.wz = leaves_[i++];
    g.uz = leaves_[i++];
    g.wr = leaves_[i++];
    g.ur = leaves_[i++];
    g.wh = leaves_[i++];
    g.uh = leaves_[i++];
    return g;
  };
  enc_fwd_ = take_gru();
  enc_bwd_ = take_gru();
  dec_ = take_gru();
  attn_w_ = leaves_[i++];
  attn_v_ = leaves_[i++];
  proj_w_ = leaves_[i++];
  proj_b_ = leaves_[i++];
  pred_w_ = leaves_[i++];
  pred_b_ = leaves_[i++];
}

Tape::Var ModelGraph::gru(Tape::Var x, Tape::Var h, const GruLeaves& w) {
  Tape::Var z = tape_.sigmoid(tape_.add(tape_.matvec(w.wz, x), tape_.matvec(w.uz, h)));
  Tape::Var r = tape_.sigmoid(tape_.add(tape_.matvec(w.wr, x), tape_.matvec(w.ur, h)));
  Tape::Var rh = tape_.mul(r, h);
  Tape::Var cand = tape_.tanh(tape_.add(tape_.matvec(w.wh, x), tape_.matvec(w.uh, rh)));
  return tape_.gate_mix(z, cand, h);
}

void ModelGraph::run_encoder(const std::vector<int32_t>& message) {
  if (message.empty()) throw std::invalid_argument("ModelGraph: empty message");
  const auto t = static_cast<int64_t>(message.size());
  const int64_t eh = params_.dims.enc_hidden();
  const int64_t m = params_.dims.hidden;

  std::vector<Tape::Var> fwd(static_cast<size_t>(t)), bwd(static_cast<size_t>(t));
  Tape::Var h = tape_.constant(Tensor::vec(eh));
  for (int64_t i = 0; i < t; ++i) {
    Tape::Var x = tape_.row(embeddings_, message[static_cast<size_t>(i)]);
    h = gru(x, h, enc_fwd_);
    fwd[static_cast<size_t>(i)] = h;
  }
  h = tape_.constant(Tensor::vec(eh));
  for (int64_t i = t - 1; i >= 0; --i) {
    Tape::Var x = tape_.row(embeddings_, message[static_cast<size_t>(i)]);
    h = gru(x, h, enc_bwd_);
    bwd[static_cast<size_t>(i)] = h;
  }

  memory_.resize(static_cast<size_t>(t));
  attn_pre_.resize(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) {
    memory_[static_cast<size_t>(i)] =
        tape_.concat(fwd[static_cast<size_t>(i)], bwd[static_cast<size_t>(i)]);
    attn_pre_[static_cast<size_t>(i)] =
        tape_.matvec_cols(attn_w_, memory_[static_cast<size_t>(i)], 0, m);
  }
  final_ = memory_.back();
  sigmoid_ = Tape::kNone;
  beta_ = Tape::kNone;
}

Tape::Var ModelGraph::response_log_prob(const std::vector<int32_t>& response,
                                        const DynamicVocab& dyn) {
  if (final_ == Tape::kNone)
    throw std::logic_error("ModelGraph: run_encoder first");
  for (int32_t id : response)
    if (!dyn.contains(id))
      throw std::runtime_error("ModelGraph: response token " + std::to_string(id) +
                               " outside the dynamic vocabulary");

  const int64_t m = params_.dims.hidden;
  std::vector<int32_t> pos_of(dyn.mask.size(), -1);
  for (size_t k = 0; k < dyn.selected.size(); ++k)
    pos_of[static_cast<size_t>(dyn.selected[k])] = static_cast<int32_t>(k);

  Tape::Var h = final_;
  int32_t prev = Vocabulary::kBos;
  std::vector<Tape::Var> terms;
  terms.reserve(response.size());
  for (int32_t y : response) {
    Tape::Var emb = tape_.row(embeddings_, prev);
    Tape::Var h_new = gru(emb, h, dec_);

    Tape::Var dec_half = tape_.matvec_cols(attn_w_, h_new, m, 2 * m);
    std::vector<Tape::Var> scores;
    scores.reserve(memory_.size());
    for (size_t j = 0; j < memory_.size(); ++j)
      scores.push_back(
          tape_.dot(attn_v_, tape_.tanh(tape_.add(attn_pre_[j], dec_half))));
    Tape::Var alpha = tape_.softmax(tape_.stack(scores));
    Tape::Var context = tape_.weighted_sum(alpha, memory_);

    Tape::Var u = tape_.concat(tape_.concat(emb, h), context);
    Tape::Var sel = tape_.affine_rows(proj_w_, proj_b_, u, dyn.selected);
    Tape::Var lp = tape_.log_softmax(sel);
    terms.push_back(tape_.pick(lp, pos_of[static_cast<size_t>(y)]));

    h = h_new;
    prev = y;
  }
  return tape_.sum(tape_.stack(terms));
}

Tape::Var ModelGraph::content_sigmoid() {
  if (final_ == Tape::kNone)
    throw std::logic_error("ModelGraph: run_encoder first");
  if (sigmoid_ == Tape::kNone)
    sigmoid_ = tape_.sigmoid(tape_.add(tape_.matvec(pred_w_, final_), pred_b_));
  return sigmoid_;
}

Tape::Var ModelGraph::content_beta(double clip) {
  if (beta_ != Tape::kNone && beta_clip_ == clip) return beta_;
  beta_ = tape_.clip(content_sigmoid(), clip, 1.0 - clip);
  beta_clip_ = clip;
  return beta_;
}

Tape::Var ModelGraph::vocab_log_prob(const DynamicVocab& sampled, const Vocabulary& vocab,
                                     double clip) {
  Tape::Var beta = content_beta(clip);
  const auto& content = vocab.content_indices();
  std::vector<uint8_t> bits(content.size());
  for (size_t c = 0; c < content.size(); ++c)
    bits[c] = sampled.contains(content[c]) ? 1 : 0;
  return tape_.bernoulli_log_prob(beta, std::move(bits));
}

void ModelGraph::add_gradients_to(ModelParams& out, double coeff) {
  auto named = out.named();
  if (named.size() != leaves_.size()) throw_shape_mismatch("ModelGraph::add_gradients_to");
  for (size_t i = 0; i < leaves_.size(); ++i) {
    const Tensor& g = tape_.gradient(leaves_[i]);
    Tensor& dst = *named[i].second;
    if (!dst.same_shape(g)) throw_shape_mismatch("ModelGraph::add_gradients_to");
    axpy(coeff, g.data.data(), dst.data.data(), dst.size());
  }
}

}  // namespace dvs2s
