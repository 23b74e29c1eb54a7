#pragma once

#include <vector>

#include "dvs2s/model.hpp"
#include "dvs2s/tape.hpp"

namespace dvs2s {

// Taped mirror of the forward model for one example. Performs the same
// arithmetic in the same order as the plain ops in model.hpp (shared kernels,
// shared softmax formulas), so taped loss values reproduce plain evaluations
// bit for bit while the tape provides gradients for every parameter.
//
// Usage: construct, run_encoder once, then build any number of response /
// vocabulary log-prob roots; combine them and call backward once.
class ModelGraph {
 public:
  ModelGraph(const ModelParams& params, bool needs_grad = true);

  void run_encoder(const std::vector<int32_t>& message);

  // Sum of per-step log-probabilities of the response under dyn; every
  // response token must be selected.
  Tape::Var response_log_prob(const std::vector<int32_t>& response, const DynamicVocab& dyn);

  // log p(T | X): Bernoulli log-likelihood of the sampled content selection
  // under the predicted (clipped) beta. Encoder must have run.
  Tape::Var vocab_log_prob(const DynamicVocab& sampled, const Vocabulary& vocab, double clip);

  // Content-word inclusion probabilities in content order; `content_beta`
  // clips away from {0, 1} for the logarithms, `content_sigmoid` is the raw
  // predictor output used for sampling.
  Tape::Var content_beta(double clip);
  Tape::Var content_sigmoid();

  Tape& tape() { return tape_; }
  double value(Tape::Var v) const { return tape_.scalar(v); }

  // Adds the accumulated leaf gradients (after tape().backward) into `out`,
  // scaled by `coeff`.
  void add_gradients_to(ModelParams& out, double coeff = 1.0);

 private:
  struct GruLeaves {
    Tape::Var wz, uz, wr, ur, wh, uh;
  };

  Tape::Var gru(Tape::Var x, Tape::Var h, const GruLeaves& w);

  const ModelParams& params_;
  Tape tape_;
  std::vector<Tape::Var> leaves_;  // aligned with params_.named()

  Tape::Var embeddings_, attn_w_, attn_v_, proj_w_, proj_b_, pred_w_, pred_b_;
  GruLeaves enc_fwd_, enc_bwd_, dec_;

  std::vector<Tape::Var> memory_;    // per-position [fwd ; bwd]
  std::vector<Tape::Var> attn_pre_;  // per-position Wa[:, :m] h_j
  Tape::Var final_ = Tape::kNone;
  Tape::Var sigmoid_ = Tape::kNone;  // cached raw content beta
  Tape::Var beta_ = Tape::kNone;     // cached clipped content beta
  double beta_clip_ = -1.0;
};

}  // namespace dvs2s
