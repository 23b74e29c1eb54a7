#pragma once

#include <iosfwd>
#include <limits>
#include <vector>

#include "dvs2s/corpus.hpp"
#include "dvs2s/model.hpp"
#include "dvs2s/numeric.hpp"
#include "dvs2s/train_config.hpp"

namespace dvs2s {

struct TrainState {
  ModelParams params;
  OptimizerState optimizer;
  double baseline = 0.0;  // moving-average reward baseline b_k
  double lr_scale = 1.0;
  int epoch = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  double prev_valid = std::numeric_limits<double>::infinity();
};

struct McDiagnostics {
  std::vector<double> rewards;       // per sample, length-normalized log-likelihood
  std::vector<double> response_lp;   // per sample, under the augmented vocabulary
  std::vector<int64_t> sample_size;  // |T~| before augmentation
};

// Monte-Carlo ascent gradient of the lower bound for one example: S Bernoulli
// draws from the predicted beta, each augmented with the response tokens for
// the likelihood term, with the baseline-corrected score-function term
// propagating through the predictor and the encoder.
ModelParams mc_gradient(const DialogPair& pair, const ModelParams& params, double baseline,
                        const Vocabulary& vocab, int samples, double beta_clip, Rng& rng,
                        McDiagnostics* diag = nullptr);

// Estimator pieces for a fixed vocabulary selection; the enumeration oracles
// in the tests are built from these.
struct EstimatorTerms {
  ModelParams pathwise;     // d log p(Y | aug(T), X) / dTheta
  ModelParams score;        // d log p(T | X) / dTheta
  double reward = 0.0;      // response_lp / L_resp
  double response_lp = 0.0; // under the augmented vocabulary
  double vocab_lp = 0.0;    // log p(T | X)
};
EstimatorTerms estimator_terms(const DialogPair& pair, const ModelParams& params,
                               const Vocabulary& vocab, const DynamicVocab& sampled,
                               double beta_clip);

// b_{k+1} = decay * b_k + (1 - decay) * mean(normalized log-likelihoods).
double update_baseline(double baseline, const std::vector<double>& normalized_lls,
                       double decay = 0.9);

// Applies one epoch of the validation schedule to the state: halves lr_scale
// when the loss increased over the previous epoch and reports whether
// training should stop (two successive increases).
bool schedule_step(TrainState& state, double validation, int* rising_epochs);

// Stage 1: static full-vocabulary cross-entropy training of encoder, decoder,
// attention and projection; predictor weights come back zero.
ModelParams pretrain_s2s(const std::vector<DialogPair>& data, const Vocabulary& vocab,
                         const TrainConfig& cfg, std::ostream* log = nullptr);

// Stage 2: binary cross-entropy of beta against the response indicator with
// the encoder frozen; touches only the predictor weights.
void pretrain_predictor(const std::vector<DialogPair>& data, ModelParams& params,
                        const Vocabulary& vocab, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

struct JointResult {
  ModelParams best_params;   // parameters at the best validation epoch
  TrainState final_state;
  double initial_valid = 0.0;
  double best_valid = 0.0;
  int epochs_run = 0;
};

// Stage 3: joint optimization. Per batch: sample vocabularies, accumulate the
// MC estimator, AdaDelta step, baseline update. Per epoch: validation loss;
// lr_scale halves when it increases and training stops after two successive
// increases or max_epochs.
JointResult train_joint(const std::vector<DialogPair>& train,
                        const std::vector<DialogPair>& valid, TrainState state,
                        const Vocabulary& vocab, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

// Mean per-token negative log-likelihood where each example decodes over
// top_k_vocab(beta, topk_content) augmented with its ground-truth tokens.
double validation_loss(const std::vector<DialogPair>& valid, const ModelParams& params,
                       const Vocabulary& vocab, const TrainConfig& cfg);

// Mean static full-vocabulary NLL over a dataset, evaluated through the taped
// path that pretraining optimizes.
double pretrain_loss(const std::vector<DialogPair>& data, const ModelParams& params);

}  // namespace dvs2s
