#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dvs2s/checkpoint.hpp"
#include "dvs2s/model_graph.hpp"
#include "dvs2s/training.hpp"
#include "helpers.hpp"

using namespace dvs2s;

namespace {

// Plain forward evaluation of the enumerated objective
//   J(theta) = sum_T p(T|X) log p(Y | aug(T), X)
// built on the untaped ops only; its finite differences are the independent
// oracle for the estimator gradients.
double enumerated_objective(const DialogPair& pair, const ModelParams& params,
                            const Vocabulary& vocab) {
  const Encoding enc = encode(pair.message, params);
  const BernoulliParams beta = predict_beta(enc, params, vocab);
  double j = 0.0;
  for (const auto& dyn : test::all_content_subsets(vocab)) {
    const double w = test::subset_weight(dyn, beta, vocab);
    const double lp = sequence_log_prob(pair.response, enc,
                                        dyn.augmented_with(pair.response), params);
    j += w * lp;
  }
  return j;
}

DialogPair tiny_pair(const Vocabulary& vocab, Rng& rng, int msg_len = 2, int resp_len = 2) {
  DialogPair p;
  p.message = test::random_tokens(vocab, msg_len, rng, false);
  p.response = test::random_tokens(vocab, resp_len, rng, true);
  return p;
}

std::vector<Tensor> named_grads(ModelParams& grads) {
  std::vector<Tensor> out;
  for (auto& [name, t] : grads.named()) out.push_back(*t);
  return out;
}

}  // namespace

TEST_CASE("every model gradient path passes the finite-difference check") {
  Vocabulary vocab = test::tiny_vocab(2, 6);  // |V| = 12
  ModelParams params = test::tiny_params(vocab, 4, 6, 32);
  // Widened attention keeps every gradient coordinate above the resolution
  // of the central-difference oracle.
  for (Tensor* t : {&params.attn_w, &params.attn_v})
    for (double& v : t->data) v *= 3.0;
  Rng rng(33);
  const DialogPair pair = tiny_pair(vocab, rng, 3, 3);

  std::vector<uint8_t> mask = vocab.function_mask();
  for (int32_t id : pair.response) mask[static_cast<size_t>(id)] = 1;
  mask[static_cast<size_t>(vocab.content_indices()[1])] = 1;
  const DynamicVocab dyn = DynamicVocab::from_mask(std::move(mask));

  // Joint loss -(log p(Y|T,X) + log p(T|X)) exercises encoder, decoder,
  // attention, projection, embeddings and predictor at once.
  auto eval = [&](bool want_grads, std::vector<Tensor>* grads) {
    ModelGraph graph(params);
    graph.run_encoder(pair.message);
    Tape::Var resp = graph.response_log_prob(pair.response, dyn);
    Tape::Var voc = graph.vocab_log_prob(dyn, vocab, 1e-7);
    Tape::Var root = graph.tape().scale(graph.tape().add(resp, voc), -1.0);
    if (want_grads) {
      graph.tape().backward(root);
      ModelParams g = zeros_like(params);
      graph.add_gradients_to(g);
      *grads = named_grads(g);
    }
    return graph.value(root);
  };

  DiffProblem prob;
  for (auto& [name, t] : params.named()) prob.params.push_back(t);
  prob.value = [&]() {
    std::vector<Tensor> unused;
    return eval(false, &unused);
  };
  prob.gradients = [&]() {
    std::vector<Tensor> grads;
    eval(true, &grads);
    return grads;
  };
  CHECK(gradient_check(prob, 1e-4) < 1e-6);
}

TEST_CASE("pretrain_s2s: uniform-init loss value, memorization, frozen at lr 0") {
  Vocabulary vocab = test::tiny_vocab(1, 5);  // |V| = 10
  Rng rng(41);
  std::vector<DialogPair> data;
  for (int i = 0; i < 4; ++i) data.push_back(tiny_pair(vocab, rng, 2, 2));  // L_resp = 3

  TrainConfig cfg;
  cfg.embed = 4;
  cfg.hidden = 4;
  cfg.batch_size = 4;
  cfg.seed = 7;
  cfg.pretrain_epochs = 0;

  // With zero projection weights every step is uniform over |V|.
  ModelParams init = pretrain_s2s(data, vocab, cfg, nullptr);
  for (double v : init.pred_w.data) CHECK(v == 0.0);
  for (double v : init.pred_b.data) CHECK(v == 0.0);
  {
    ModelParams uniform = init;
    uniform.proj_w.fill(0.0);
    uniform.proj_b.fill(0.0);
    CHECK(pretrain_loss(data, uniform) ==
          doctest::Approx(3.0 * std::log(vocab.size())).epsilon(1e-12));
  }

  // Memorize one pair repeated for 200 steps: loss collapses below 10% of
  // its starting value, and the validation loss falls with it.
  std::vector<DialogPair> memo(8, data[0]);
  TrainConfig mc = cfg;
  mc.pretrain_epochs = 100;  // 2 batches per epoch -> 200 steps
  mc.topk_content = 2;
  const double initial = pretrain_loss(memo, init);
  const ModelParams fit = pretrain_s2s(memo, vocab, mc, nullptr);
  CHECK(pretrain_loss(memo, fit) < 0.1 * initial);
  CHECK(validation_loss(memo, fit, vocab, mc) < validation_loss(memo, init, vocab, mc));

  // Zero learning scale leaves every tensor bitwise unchanged.
  TrainConfig zc = cfg;
  zc.pretrain_epochs = 1;
  zc.lr = 0.0;
  const ModelParams frozen = pretrain_s2s(data, vocab, zc, nullptr);
  const auto a = init.named();
  const auto b = frozen.named();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second->data == b[i].second->data);
}

TEST_CASE("pretrain_predictor: saturation both ways, encoder untouched") {
  Vocabulary vocab = test::tiny_vocab(1, 4);
  const auto& content = vocab.content_indices();
  const int32_t always = content[0];
  const int32_t never = content[1];
  const int32_t msg_word = content[2];

  std::vector<DialogPair> data;
  for (int i = 0; i < 6; ++i) {
    DialogPair p;
    p.message = {msg_word};
    p.response = {always, content[3], Vocabulary::kEos};
    data.push_back(std::move(p));
  }

  TrainConfig cfg;
  cfg.embed = 4;
  cfg.hidden = 4;
  cfg.batch_size = 6;
  cfg.seed = 3;
  cfg.predictor_epochs = 2500;  // AdaDelta steps are small; drive to saturation

  ModelParams params = test::tiny_params(vocab, 4, 4, 51);
  params.pred_w.fill(0.0);
  params.pred_b.fill(0.0);
  const Tensor encoder_before = params.enc_fwd.wz;
  const Tensor embeddings_before = params.embeddings;

  pretrain_predictor(data, params, vocab, cfg, nullptr);
  CHECK(params.enc_fwd.wz.data == encoder_before.data);  // freeze contract
  CHECK(params.embeddings.data == embeddings_before.data);

  const Encoding enc = encode(data[0].message, params);
  const BernoulliParams beta = predict_beta(enc, params, vocab);
  CHECK(beta.beta[always] > 0.95);
  CHECK(beta.beta[never] < 0.05);
}

TEST_CASE("update_baseline: hand values and the geometric fixed point") {
  CHECK(update_baseline(0.5, {}) == doctest::Approx(0.45).epsilon(1e-14));
  CHECK(update_baseline(-2.0, {0.0, 0.0}) == doctest::Approx(-1.8).epsilon(1e-14));

  // One example, one sample, L_resp = 2, total log-prob -2.0.
  CHECK(update_baseline(0.0, {-2.0 / 2.0}) == doctest::Approx(-0.1).epsilon(1e-14));

  double b = 0.0;
  for (int k = 0; k < 200; ++k) b = update_baseline(b, {-3.25});
  CHECK(std::fabs(b - (-3.25)) < 1e-6);
}

TEST_CASE("schedule: lr halves exactly once per increase, stops after two") {
  TrainState state;
  state.lr_scale = 1.0;
  state.prev_valid = 1.0;
  state.best_valid = 1.0;
  int rising = 0;

  CHECK_FALSE(schedule_step(state, 0.9, &rising));  // improvement
  CHECK(state.lr_scale == 1.0);
  CHECK_FALSE(schedule_step(state, 1.1, &rising));  // first increase
  CHECK(state.lr_scale == 0.5);
  CHECK_FALSE(schedule_step(state, 0.8, &rising));  // recovers, counter resets
  CHECK(state.lr_scale == 0.5);
  CHECK_FALSE(schedule_step(state, 0.9, &rising));
  CHECK(state.lr_scale == 0.25);
  CHECK(schedule_step(state, 1.0, &rising));  // two successive increases
  CHECK(state.lr_scale == 0.125);
}

TEST_CASE("mc_gradient: saturated predictor reduces to the static gradient") {
  Vocabulary vocab = test::tiny_vocab(1, 4);
  ModelParams params = test::tiny_params(vocab, 4, 4, 61);
  params.pred_b.fill(900.0);  // beta saturates to exactly 1.0
  Rng rng(62);
  const DialogPair pair = tiny_pair(vocab, rng);

  Rng draw(63);
  McDiagnostics diag;
  const ModelParams grads =
      mc_gradient(pair, params, /*baseline=*/-0.4, vocab, 3, 1e-7, draw, &diag);
  for (int64_t s : diag.sample_size) CHECK(s == vocab.size());

  // Static reference: gradient of log p(Y | full vocab, X) alone.
  ModelGraph graph(params);
  graph.run_encoder(pair.message);
  Tape::Var resp =
      graph.response_log_prob(pair.response, DynamicVocab::full(vocab.size()));
  graph.tape().backward(resp);
  ModelParams expect = zeros_like(params);
  graph.add_gradients_to(expect);

  const auto got = grads.named();
  const auto want = expect.named();
  for (size_t i = 0; i < got.size(); ++i)
    for (int64_t j = 0; j < got[i].second->size(); ++j)
      CHECK((*got[i].second)[j] == doctest::Approx((*want[i].second)[j]).epsilon(1e-12));
}

TEST_CASE("enumeration oracles: unbiasedness, baseline invariance, score identity") {
  Vocabulary vocab = test::tiny_vocab(1, 4);  // 2^4 selections
  ModelParams params = test::tiny_params(vocab, 3, 4, 71);
  Rng rng(72);
  const DialogPair pair = tiny_pair(vocab, rng);

  const Encoding enc = encode(pair.message, params);
  const BernoulliParams beta = predict_beta(enc, params, vocab);
  const auto subsets = test::all_content_subsets(vocab);

  auto enumerate_estimator = [&](double baseline) {
    ModelParams acc = zeros_like(params);
    for (const auto& dyn : subsets) {
      const double w = test::subset_weight(dyn, beta, vocab);
      EstimatorTerms terms = estimator_terms(pair, params, vocab, dyn, 1e-7);
      add_scaled(acc, terms.pathwise, w);
      add_scaled(acc, terms.score, w * (terms.reward - baseline));
    }
    return acc;
  };

  // Score-function identity: sum_T p(T) d log p(T) / d theta = 0.
  ModelParams identity = zeros_like(params);
  for (const auto& dyn : subsets) {
    EstimatorTerms terms = estimator_terms(pair, params, vocab, dyn, 1e-7);
    add_scaled(identity, terms.score, test::subset_weight(dyn, beta, vocab));
  }
  for (const Tensor* t : identity.tensors())
    for (double v : t->data) CHECK(std::fabs(v) < 1e-10);

  // Baseline invariance of the enumerated expectation.
  const ModelParams e0 = enumerate_estimator(0.0);
  const ModelParams e100 = enumerate_estimator(100.0);
  {
    const auto a = e0.named();
    const auto b = e100.named();
    for (size_t i = 0; i < a.size(); ++i)
      for (int64_t j = 0; j < a[i].second->size(); ++j)
        CHECK(std::fabs((*a[i].second)[j] - (*b[i].second)[j]) < 1e-8);
  }

  // Unnormalized-reward estimator against finite differences of the plainly
  // enumerated objective: the exact-gradient structure, forward ops only.
  // Absolute tolerance: the objective sums many branches, so the relative
  // check would only measure float noise on near-zero coordinates.
  ModelParams exact11 = zeros_like(params);
  for (const auto& dyn : subsets) {
    const double w = test::subset_weight(dyn, beta, vocab);
    EstimatorTerms terms = estimator_terms(pair, params, vocab, dyn, 1e-7);
    add_scaled(exact11, terms.pathwise, w);
    add_scaled(exact11, terms.score, w * terms.response_lp);
  }
  {
    const double eps = 1e-5;
    double worst = 0.0;
    auto analytic = exact11.named();
    auto tensors = params.named();
    for (size_t i = 0; i < tensors.size(); ++i) {
      Tensor& t = *tensors[i].second;
      for (int64_t j = 0; j < t.size(); ++j) {
        const double saved = t[j];
        t[j] = saved + eps;
        const double up = enumerated_objective(pair, params, vocab);
        t[j] = saved - eps;
        const double down = enumerated_objective(pair, params, vocab);
        t[j] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        worst = std::max(worst, std::fabs(numeric - (*analytic[i].second)[j]));
      }
    }
    CHECK(worst < 1e-7);
  }

  // Empirical MC mean drifts toward the enumerated expectation.
  const int draws = 3000;
  ModelParams mean = zeros_like(params);
  for (int d = 0; d < draws; ++d) {
    Rng draw_rng(Rng::mix(1234, static_cast<uint64_t>(d)));
    const ModelParams g = mc_gradient(pair, params, 0.0, vocab, 1, 1e-7, draw_rng);
    add_scaled(mean, g, 1.0 / draws);
  }
  const auto m = mean.named();
  const auto e = e0.named();
  int64_t total = 0, close = 0;
  for (size_t i = 0; i < m.size(); ++i)
    for (int64_t j = 0; j < m[i].second->size(); ++j) {
      ++total;
      if (std::fabs((*m[i].second)[j] - (*e[i].second)[j]) <
          0.05 * std::max(1.0, std::fabs((*e[i].second)[j])))
        ++close;
    }
  CHECK(static_cast<double>(close) / static_cast<double>(total) > 0.9);
}

TEST_CASE("mc_gradient: non-finite parameters raise an error") {
  Vocabulary vocab = test::tiny_vocab(1, 4);
  ModelParams params = test::tiny_params(vocab, 3, 4, 64);
  params.proj_b[0] = std::numeric_limits<double>::quiet_NaN();
  Rng rng(65);
  const DialogPair pair = tiny_pair(vocab, rng);
  CHECK_THROWS(static_cast<void>(mc_gradient(pair, params, 0.0, vocab, 1, 1e-7, rng)));
}

TEST_CASE("lower bound: enumerated L never exceeds log p(Y|X)") {
  Rng rng(81);
  for (int trial = 0; trial < 5; ++trial) {
    Vocabulary vocab = test::tiny_vocab(1, 5);
    ModelParams params = test::tiny_params(vocab, 3, 4, 82 + static_cast<uint64_t>(trial));
    const DialogPair pair = tiny_pair(vocab, rng);
    const Encoding enc = encode(pair.message, params);
    const BernoulliParams beta = predict_beta(enc, params, vocab);

    double lower = 0.0, evidence = 0.0;
    for (const auto& dyn : test::all_content_subsets(vocab)) {
      const double w = test::subset_weight(dyn, beta, vocab);
      const double lp = sequence_log_prob(pair.response, enc,
                                          dyn.augmented_with(pair.response), params);
      lower += w * lp;
      evidence += w * std::exp(lp);
    }
    CHECK(lower <= std::log(evidence) + 1e-10);
  }
}

TEST_CASE("validation_loss: uniform model and single-example identities") {
  Vocabulary vocab = test::tiny_vocab(1, 5);
  ModelParams params = test::tiny_params(vocab, 4, 4, 91);
  params.proj_w.fill(0.0);
  params.proj_b.fill(0.0);

  Rng rng(92);
  const DialogPair pair = tiny_pair(vocab, rng, 2, 2);
  TrainConfig cfg;
  cfg.topk_content = 2;

  const Encoding enc = encode(pair.message, params);
  const BernoulliParams beta = predict_beta(enc, params, vocab);
  const DynamicVocab dyn =
      top_k_vocab(beta, 2, vocab).augmented_with(pair.response);
  const double expect = std::log(static_cast<double>(dyn.size()));
  CHECK(validation_loss({pair}, params, vocab, cfg) ==
        doctest::Approx(expect).epsilon(1e-12));

  ModelParams rnd = test::tiny_params(vocab, 4, 4, 93);
  const Encoding enc2 = encode(pair.message, rnd);
  const DynamicVocab dyn2 =
      top_k_vocab(predict_beta(enc2, rnd, vocab), 2, vocab).augmented_with(pair.response);
  const double lp = sequence_log_prob(pair.response, enc2, dyn2, rnd);
  CHECK(validation_loss({pair}, rnd, vocab, cfg) ==
        doctest::Approx(-lp / static_cast<double>(pair.response.size())).epsilon(1e-12));
}

TEST_CASE("train_joint: deterministic checkpoints, worker-count invariance") {
  Vocabulary vocab = test::tiny_vocab(1, 5);
  Rng rng(95);
  std::vector<DialogPair> train, valid;
  for (int i = 0; i < 6; ++i) train.push_back(tiny_pair(vocab, rng));
  for (int i = 0; i < 2; ++i) valid.push_back(tiny_pair(vocab, rng));

  TrainConfig cfg;
  cfg.embed = 4;
  cfg.hidden = 4;
  cfg.batch_size = 3;
  cfg.mc_samples = 2;
  cfg.max_epochs = 2;
  cfg.pretrain_epochs = 2;
  cfg.predictor_epochs = 2;
  cfg.seed = 5;

  auto run = [&](int workers) {
    TrainConfig c = cfg;
    c.workers = workers;
    ModelParams params = pretrain_s2s(train, vocab, c, nullptr);
    pretrain_predictor(train, params, vocab, c, nullptr);
    TrainState state;
    state.params = std::move(params);
    state.lr_scale = c.lr;
    JointResult result = train_joint(train, valid, std::move(state), vocab, c, nullptr);
    const auto path = (std::filesystem::temp_directory_path() /
                       ("dvs2s_ck_" + std::to_string(workers) + ".bin"))
                          .string();
    save_checkpoint(path, result.best_params, c, vocab.digest());
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::remove(path.c_str());
    return std::make_pair(bytes, result);
  };

  auto [bytes1, res1] = run(1);
  auto [bytes2, res2] = run(2);
  CHECK(bytes1 == bytes2);  // same seed, any worker count: identical bytes
  CHECK(res1.best_valid <= res1.initial_valid + 1e-6);
  CHECK(res1.epochs_run >= 1);

  // The checkpoint round-trips exactly.
  const auto path =
      (std::filesystem::temp_directory_path() / "dvs2s_ck_rt.bin").string();
  save_checkpoint(path, res1.best_params, cfg, vocab.digest());
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.vocab_digest == vocab.digest());
  CHECK(back.config.hidden == cfg.hidden);
  const auto a = res1.best_params.named();
  const auto b = back.params.named();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second->data == b[i].second->data);
  std::remove(path.c_str());
}

TEST_CASE("pretrain loss is exactly reproduced by full-vocabulary evaluation") {
  Vocabulary vocab = test::tiny_vocab(2, 6);
  ModelParams params = test::tiny_params(vocab, 4, 6, 97);
  Rng rng(98);
  std::vector<DialogPair> data;
  for (int i = 0; i < 5; ++i) data.push_back(tiny_pair(vocab, rng, 2, 3));

  const DynamicVocab full = DynamicVocab::full(vocab.size());
  double plain = 0.0;
  for (const auto& pair : data)
    plain += -sequence_log_prob(pair.response, encode(pair.message, params), full, params);
  plain /= static_cast<double>(data.size());

  CHECK(pretrain_loss(data, params) == plain);  // bit-exact bridge
}
