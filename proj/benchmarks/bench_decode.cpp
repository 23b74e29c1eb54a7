#include <benchmark/benchmark.h>

#include "dvs2s/bench.hpp"
#include "dvs2s/beam.hpp"
#include "dvs2s/numeric.hpp"
#include "dvs2s/rng.hpp"

// Microbenchmarks for the decode hot path. The full static-vs-dynamic
// comparison at publication dimensions lives behind `dvs2s bench`; these
// track the building blocks at sizes that run in milliseconds.

namespace {

using namespace dvs2s;

struct Setup {
  Vocabulary vocab;
  ModelParams params;
  Encoding enc;
  DecodeContext ctx;

  explicit Setup(int64_t vocab_size, int64_t hidden, int64_t embed) {
    for (int64_t i = Vocabulary::kNumSpecials; i < vocab_size; ++i) {
      VocabEntry e;
      e.word = (i < 64 ? "f" : "w") + std::to_string(i);
      e.count = 100;
      e.cls = i < 64 ? WordClass::Function : WordClass::Content;
      vocab.append(std::move(e));
    }
    ModelDims dims;
    dims.vocab = vocab_size;
    dims.content = static_cast<int64_t>(vocab.content_indices().size());
    dims.embed = embed;
    dims.hidden = hidden;
    dims.attn = hidden;
    params = init_model_params(dims, 7);
    enc = encode({70, 80, 90, 100, 110, 120}, params);
    ctx = DecodeContext(enc, params);
  }
};

Setup& medium() {
  static Setup s(4000, 128, 64);
  return s;
}

}  // namespace

static void DecodeStepStatic(benchmark::State& state) {
  Setup& s = medium();
  const DynamicVocab full = DynamicVocab::full(s.vocab.size());
  Tensor h = s.enc.final;
  for (auto _ : state) {
    auto [dist, h_new] = decode_step(70, h, s.ctx, full, s.params);
    benchmark::DoNotOptimize(dist.data.data());
  }
}
BENCHMARK(DecodeStepStatic);

static void DecodeStepDynamic(benchmark::State& state) {
  Setup& s = medium();
  const BernoulliParams beta = predict_beta(s.enc, s.params, s.vocab);
  const DynamicVocab dyn = top_k_vocab(beta, state.range(0), s.vocab);
  Tensor h = s.enc.final;
  for (auto _ : state) {
    auto [dist, h_new] = decode_step(70, h, s.ctx, dyn, s.params);
    benchmark::DoNotOptimize(dist.data.data());
  }
  state.SetLabel("selected=" + std::to_string(dyn.size()));
}
BENCHMARK(DecodeStepDynamic)->Arg(100)->Arg(400)->Arg(1600);

static void PredictBetaTopK(benchmark::State& state) {
  Setup& s = medium();
  for (auto _ : state) {
    const BernoulliParams beta = predict_beta(s.enc, s.params, s.vocab);
    const DynamicVocab dyn = top_k_vocab(beta, 400, s.vocab);
    benchmark::DoNotOptimize(dyn.selected.data());
  }
}
BENCHMARK(PredictBetaTopK);

static void GruCell(benchmark::State& state) {
  Setup& s = medium();
  Tensor x = Tensor::vec(s.params.dims.embed, 0.1);
  Tensor h = Tensor::vec(s.params.dims.hidden, 0.2);
  for (auto _ : state) {
    Tensor out = gru_cell(x, h, s.params.dec);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(GruCell);

static void MaskedSoftmax(benchmark::State& state) {
  Rng rng(5);
  Tensor scores = Tensor::vec(state.range(0));
  std::vector<uint8_t> mask(static_cast<size_t>(state.range(0)));
  for (int64_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform(-4.0, 4.0);
    mask[static_cast<size_t>(i)] = rng.bernoulli(0.25);
  }
  mask[0] = 1;
  for (auto _ : state) {
    Tensor p = masked_softmax(scores, mask);
    benchmark::DoNotOptimize(p.data.data());
  }
}
BENCHMARK(MaskedSoftmax)->Arg(1024)->Arg(8192)->Arg(30000);

static void FullBeamSearch(benchmark::State& state) {
  Setup& s = medium();
  const BernoulliParams beta = predict_beta(s.enc, s.params, s.vocab);
  const DynamicVocab dyn = top_k_vocab(beta, 400, s.vocab);
  for (auto _ : state) {
    const auto ranked = beam_search(s.enc, dyn, s.params, 5, 12);
    benchmark::DoNotOptimize(ranked.data());
  }
}
BENCHMARK(FullBeamSearch);

BENCHMARK_MAIN();
