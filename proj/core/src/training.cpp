#include "dvs2s/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "dvs2s/model_graph.hpp"

namespace dvs2s {

namespace {

constexpr uint64_t kPretrainStream = 0x5052455452ull;   // batch shuffles, stage 1
constexpr uint64_t kPredictorStream = 0x50524544ull;    // stage 2
constexpr uint64_t kJointStream = 0x4a4f494e54ull;      // stage 3

void check_grad_finite(const ModelParams& g, const std::string& where) {
  for (const Tensor* t : g.tensors())
    if (!t->all_finite()) throw std::runtime_error(where + ": non-finite gradient");
}

void clip_global_norm(ModelParams& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_norm(g);
  if (norm > max_norm) scale_params(g, max_norm / norm);
}

void log_batch(std::ostream* log, int epoch, int64_t batch, double loss, double baseline,
               double lr_scale) {
  if (log)
    *log << epoch << ' ' << batch << ' ' << loss << ' ' << baseline << ' ' << lr_scale
         << '\n';
}

ModelDims dims_for(const Vocabulary& vocab, const TrainConfig& cfg) {
  ModelDims d;
  d.vocab = vocab.size();
  d.content = static_cast<int64_t>(vocab.content_indices().size());
  d.embed = cfg.embed;
  d.hidden = cfg.hidden;
  d.attn = cfg.attn > 0 ? cfg.attn : cfg.hidden;
  return d;
}

}  // namespace

ModelParams mc_gradient(const DialogPair& pair, const ModelParams& params, double baseline,
                        const Vocabulary& vocab, int samples, double beta_clip, Rng& rng,
                        McDiagnostics* diag) {
  if (samples < 1) throw std::invalid_argument("mc_gradient: samples must be >= 1");

  ModelGraph graph(params);
  graph.run_encoder(pair.message);

  // Draw vocabularies from the raw inclusion probabilities; clipping only
  // guards the logarithms in the score term.
  BernoulliParams beta;
  beta.beta = Tensor::vec(vocab.size(), 1.0);
  {
    const Tensor& sig = graph.tape().value(graph.content_sigmoid());
    const auto& content = vocab.content_indices();
    for (size_t c = 0; c < content.size(); ++c)
      beta.beta[content[c]] = sig[static_cast<int64_t>(c)];
  }

  const auto resp_len = static_cast<double>(pair.response.size());
  Tape::Var acc = Tape::kNone;
  for (int s = 0; s < samples; ++s) {
    DynamicVocab sampled = sample_vocab(beta, vocab, rng);
    DynamicVocab augmented = sampled.augmented_with(pair.response);

    Tape::Var resp = graph.response_log_prob(pair.response, augmented);
    Tape::Var voc = graph.vocab_log_prob(sampled, vocab, beta_clip);

    const double resp_lp = graph.value(resp);
    if (!std::isfinite(resp_lp))
      throw std::runtime_error("mc_gradient: non-finite response log-likelihood");
    const double reward = resp_lp / resp_len;
    if (diag) {
      diag->rewards.push_back(reward);
      diag->response_lp.push_back(resp_lp);
      diag->sample_size.push_back(sampled.size());
    }

    Tape::Var term = graph.tape().add(resp, graph.tape().scale(voc, reward - baseline));
    acc = (acc == Tape::kNone) ? term : graph.tape().add(acc, term);
  }
  Tape::Var root = graph.tape().scale(acc, 1.0 / static_cast<double>(samples));

  graph.tape().backward(root);
  ModelParams grads = zeros_like(params);
  graph.add_gradients_to(grads);
  check_grad_finite(grads, "mc_gradient");
  return grads;
}

EstimatorTerms estimator_terms(const DialogPair& pair, const ModelParams& params,
                               const Vocabulary& vocab, const DynamicVocab& sampled,
                               double beta_clip) {
  ModelGraph graph(params);
  graph.run_encoder(pair.message);

  const DynamicVocab augmented = sampled.augmented_with(pair.response);
  Tape::Var resp = graph.response_log_prob(pair.response, augmented);
  Tape::Var voc = graph.vocab_log_prob(sampled, vocab, beta_clip);

  EstimatorTerms out;
  out.response_lp = graph.value(resp);
  out.vocab_lp = graph.value(voc);
  out.reward = out.response_lp / static_cast<double>(pair.response.size());

  out.pathwise = zeros_like(params);
  graph.tape().backward(resp);
  graph.add_gradients_to(out.pathwise);

  out.score = zeros_like(params);
  graph.tape().backward(voc);
  graph.add_gradients_to(out.score);
  return out;
}

double update_baseline(double baseline, const std::vector<double>& normalized_lls,
                       double decay) {
  double mean = 0.0;
  if (!normalized_lls.empty()) {
    for (double v : normalized_lls) mean += v;
    mean /= static_cast<double>(normalized_lls.size());
  }
  return decay * baseline + (1.0 - decay) * mean;
}

bool schedule_step(TrainState& state, double validation, int* rising_epochs) {
  if (validation > state.prev_valid) {
    state.lr_scale /= 2.0;
    ++*rising_epochs;
  } else {
    *rising_epochs = 0;
  }
  state.prev_valid = validation;
  state.best_valid = std::min(state.best_valid, validation);
  return *rising_epochs >= 2;
}

ModelParams pretrain_s2s(const std::vector<DialogPair>& data, const Vocabulary& vocab,
                         const TrainConfig& cfg, std::ostream* log) {
  ModelParams params = init_model_params(dims_for(vocab, cfg), cfg.seed);
  params.pred_w.fill(0.0);
  params.pred_b.fill(0.0);

  const DynamicVocab full = DynamicVocab::full(vocab.size());
  OptimizerState opt;
  for (int epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    const auto batches =
        make_batches(data, cfg.batch_size, Rng::mix(cfg.seed, kPretrainStream, epoch));
    for (size_t k = 0; k < batches.size(); ++k) {
      const Batch& batch = batches[k];
      std::vector<ModelParams> grads(static_cast<size_t>(batch.rows));
      std::vector<double> losses(static_cast<size_t>(batch.rows));
      parallel_for(batch.rows, cfg.workers, [&](int64_t i) {
        const DialogPair pair = batch.pair(i);
        ModelGraph graph(params);
        graph.run_encoder(pair.message);
        Tape::Var resp = graph.response_log_prob(pair.response, full);
        losses[static_cast<size_t>(i)] = -graph.value(resp);
        graph.tape().backward(resp, -1.0);  // descent on the NLL
        grads[static_cast<size_t>(i)] = zeros_like(params);
        graph.add_gradients_to(grads[static_cast<size_t>(i)]);
      });

      ModelParams batch_grad = zeros_like(params);
      double loss = 0.0;
      for (int64_t i = 0; i < batch.rows; ++i) {
        add_scaled(batch_grad, grads[static_cast<size_t>(i)],
                   1.0 / static_cast<double>(batch.rows));
        loss += losses[static_cast<size_t>(i)] / static_cast<double>(batch.rows);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("pretrain_s2s: diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(k));
      check_grad_finite(batch_grad, "pretrain_s2s");
      clip_global_norm(batch_grad, cfg.grad_clip);

      auto tensors = params.tensors();
      std::vector<const Tensor*> gs;
      for (const Tensor* t : batch_grad.tensors()) gs.push_back(t);
      adadelta_step(tensors, gs, opt, cfg.lr);
      log_batch(log, epoch, static_cast<int64_t>(k), loss, 0.0, cfg.lr);
    }
  }
  return params;
}

void pretrain_predictor(const std::vector<DialogPair>& data, ModelParams& params,
                        const Vocabulary& vocab, const TrainConfig& cfg,
                        std::ostream* log) {
  const auto& content = vocab.content_indices();
  if (content.empty()) return;

  // Encoder is frozen, so the final states are constants; compute them once.
  std::vector<Tensor> finals(data.size());
  std::vector<std::vector<uint8_t>> targets(data.size());
  parallel_for(static_cast<int64_t>(data.size()), cfg.workers, [&](int64_t i) {
    finals[static_cast<size_t>(i)] = encode(data[static_cast<size_t>(i)].message, params).final;
    const auto bits = target_indicator(data[static_cast<size_t>(i)].response, vocab);
    auto& t = targets[static_cast<size_t>(i)];
    t.resize(content.size());
    for (size_t c = 0; c < content.size(); ++c) t[c] = bits[static_cast<size_t>(content[c])];
  });

  OptimizerState opt;
  std::vector<int64_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

  for (int epoch = 1; epoch <= cfg.predictor_epochs; ++epoch) {
    Rng shuffle(Rng::mix(cfg.seed, kPredictorStream, epoch));
    for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle.below(static_cast<uint64_t>(i + 1)))]);

    const auto nb = (order.size() + static_cast<size_t>(cfg.batch_size) - 1) /
                    static_cast<size_t>(cfg.batch_size);
    for (size_t k = 0; k < nb; ++k) {
      const size_t lo = k * static_cast<size_t>(cfg.batch_size);
      const size_t hi = std::min(order.size(), lo + static_cast<size_t>(cfg.batch_size));
      const auto rows = static_cast<int64_t>(hi - lo);

      std::vector<Tensor> gw(static_cast<size_t>(rows)), gb(static_cast<size_t>(rows));
      std::vector<double> losses(static_cast<size_t>(rows));
      parallel_for(rows, cfg.workers, [&](int64_t r) {
        const auto idx = static_cast<size_t>(order[lo + static_cast<size_t>(r)]);
        Tape tape;
        Tape::Var h = tape.leaf(finals[idx], false);
        Tape::Var wc = tape.leaf(params.pred_w, true);
        Tape::Var bc = tape.leaf(params.pred_b, true);
        Tape::Var beta = tape.clip(tape.sigmoid(tape.add(tape.matvec(wc, h), bc)),
                                   cfg.beta_clip, 1.0 - cfg.beta_clip);
        Tape::Var obj = tape.bernoulli_log_prob(beta, targets[idx]);
        losses[static_cast<size_t>(r)] = -tape.scalar(obj);
        tape.backward(obj, -1.0);
        gw[static_cast<size_t>(r)] = tape.gradient(wc);
        gb[static_cast<size_t>(r)] = tape.gradient(bc);
      });

      Tensor grad_w = zeros_like(params.pred_w);
      Tensor grad_b = zeros_like(params.pred_b);
      double loss = 0.0;
      for (int64_t r = 0; r < rows; ++r) {
        axpy(1.0 / static_cast<double>(rows), gw[static_cast<size_t>(r)].data.data(),
             grad_w.data.data(), grad_w.size());
        axpy(1.0 / static_cast<double>(rows), gb[static_cast<size_t>(r)].data.data(),
             grad_b.data.data(), grad_b.size());
        loss += losses[static_cast<size_t>(r)] / static_cast<double>(rows);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("pretrain_predictor: non-finite loss");

      std::vector<Tensor*> ps = {&params.pred_w, &params.pred_b};
      std::vector<const Tensor*> gs = {&grad_w, &grad_b};
      adadelta_step(ps, gs, opt, cfg.lr);
      log_batch(log, epoch, static_cast<int64_t>(k), loss, 0.0, cfg.lr);
    }
  }
}

JointResult train_joint(const std::vector<DialogPair>& train,
                        const std::vector<DialogPair>& valid, TrainState state,
                        const Vocabulary& vocab, const TrainConfig& cfg, std::ostream* log) {
  JointResult result;
  result.initial_valid = validation_loss(valid, state.params, vocab, cfg);
  result.best_valid = result.initial_valid;
  result.best_params = state.params;
  state.prev_valid = result.initial_valid;
  state.best_valid = result.initial_valid;

  int rising_epochs = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches =
        make_batches(train, cfg.batch_size, Rng::mix(cfg.seed, kJointStream, epoch));
    for (size_t k = 0; k < batches.size(); ++k) {
      const Batch& batch = batches[k];
      std::vector<ModelParams> grads(static_cast<size_t>(batch.rows));
      std::vector<McDiagnostics> diags(static_cast<size_t>(batch.rows));
      parallel_for(batch.rows, cfg.workers, [&](int64_t i) {
        const DialogPair pair = batch.pair(i);
        Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch),
                         static_cast<uint64_t>(k), static_cast<uint64_t>(i)));
        grads[static_cast<size_t>(i)] =
            mc_gradient(pair, state.params, state.baseline, vocab, cfg.mc_samples,
                        cfg.beta_clip, rng, &diags[static_cast<size_t>(i)]);
      });

      // Fixed-order reduction: results are identical for any worker count.
      ModelParams step = zeros_like(state.params);
      std::vector<double> normalized;
      double loss = 0.0;
      for (int64_t i = 0; i < batch.rows; ++i) {
        add_scaled(step, grads[static_cast<size_t>(i)],
                   -1.0 / static_cast<double>(batch.rows));  // descent direction
        const auto& d = diags[static_cast<size_t>(i)];
        for (double r : d.rewards) normalized.push_back(r);
        double mean_lp = 0.0;
        for (double lp : d.response_lp) mean_lp += lp / static_cast<double>(d.response_lp.size());
        loss += -mean_lp / static_cast<double>(batch.rows);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("train_joint: diverged (non-finite loss)");
      clip_global_norm(step, cfg.grad_clip);

      auto tensors = state.params.tensors();
      std::vector<const Tensor*> gs;
      for (const Tensor* t : step.tensors()) gs.push_back(t);
      adadelta_step(tensors, gs, state.optimizer, state.lr_scale);

      state.baseline = update_baseline(state.baseline, normalized, cfg.baseline_decay);
      log_batch(log, epoch, static_cast<int64_t>(k), loss, state.baseline, state.lr_scale);
    }

    const double val = validation_loss(valid, state.params, vocab, cfg);
    if (!std::isfinite(val))
      throw std::runtime_error("train_joint: non-finite validation loss");
    if (log) *log << "# epoch " << epoch << " validation " << val << '\n';

    if (val < result.best_valid) {
      result.best_valid = val;
      result.best_params = state.params;
    }
    const bool stop = schedule_step(state, val, &rising_epochs);
    state.epoch = epoch;
    result.epochs_run = epoch;
    if (stop) break;
  }

  result.final_state = std::move(state);
  return result;
}

double validation_loss(const std::vector<DialogPair>& valid, const ModelParams& params,
                       const Vocabulary& vocab, const TrainConfig& cfg) {
  const auto k = std::min<int64_t>(cfg.topk_content,
                                   static_cast<int64_t>(vocab.content_indices().size()));
  double total_lp = 0.0;
  int64_t total_tokens = 0;
  std::vector<double> lps(valid.size());
  std::vector<int64_t> lens(valid.size());
  parallel_for(static_cast<int64_t>(valid.size()), cfg.workers, [&](int64_t i) {
    const DialogPair& pair = valid[static_cast<size_t>(i)];
    const Encoding enc = encode(pair.message, params);
    const BernoulliParams beta = predict_beta(enc, params, vocab);
    const DynamicVocab dyn = top_k_vocab(beta, k, vocab).augmented_with(pair.response);
    lps[static_cast<size_t>(i)] = sequence_log_prob(pair.response, enc, dyn, params);
    lens[static_cast<size_t>(i)] = static_cast<int64_t>(pair.response.size());
  });
  for (size_t i = 0; i < valid.size(); ++i) {
    total_lp += lps[i];
    total_tokens += lens[i];
  }
  return -total_lp / static_cast<double>(total_tokens);
}

double pretrain_loss(const std::vector<DialogPair>& data, const ModelParams& params) {
  const DynamicVocab full = DynamicVocab::full(static_cast<int32_t>(params.dims.vocab));
  double total = 0.0;
  for (const DialogPair& pair : data) {
    ModelGraph graph(params, /*needs_grad=*/false);
    graph.run_encoder(pair.message);
    total += -graph.value(graph.response_log_prob(pair.response, full));
  }
  return total / static_cast<double>(data.size());
}

}  // namespace dvs2s
