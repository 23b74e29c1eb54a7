#include "dvs2s/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <new>
#include <sstream>
#include <stdexcept>

#include "dvs2s/rng.hpp"

namespace dvs2s {

namespace {

Vocabulary synthetic_vocabulary(const BenchConfig& cfg) {
  if (cfg.function_words < Vocabulary::kNumSpecials || cfg.function_words > cfg.vocab_size)
    throw std::invalid_argument("bench: function_words out of range");
  Vocabulary v;
  for (int64_t i = Vocabulary::kNumSpecials; i < cfg.vocab_size; ++i) {
    VocabEntry e;
    e.word = (i < cfg.function_words ? "f" : "w") + std::to_string(i);
    e.count = 100;
    e.cls = i < cfg.function_words ? WordClass::Function : WordClass::Content;
    v.append(std::move(e));
  }
  return v;
}

// Beam expansion for exactly len_r steps with </s> kept out of the
// candidates, so static and dynamic mode do identical amounts of work per
// word and a repetition never terminates early.
void forced_beam_decode(const Encoding& enc, const DecodeContext& ctx,
                        const DynamicVocab& dyn, const ModelParams& params, int beam,
                        int len_r, OpCounter* counter) {
  struct Hyp {
    double log_prob = 0.0;
    int32_t prev = Vocabulary::kBos;
    Tensor state;
  };
  std::vector<Hyp> active(1);
  active[0].state = enc.final;

  struct Cand {
    double log_prob;
    int32_t parent;
    int32_t token;
  };
  std::vector<Cand> cands;
  std::vector<Tensor> new_states;
  for (int step = 0; step < len_r; ++step) {
    cands.clear();
    new_states.clear();
    for (size_t p = 0; p < active.size(); ++p) {
      auto [dist, h_new] = decode_step(active[p].prev, active[p].state, ctx, dyn, params,
                                       counter);
      new_states.push_back(std::move(h_new));
      for (int64_t k = 0; k < dist.size(); ++k) {
        const int32_t token = dyn.selected[static_cast<size_t>(k)];
        if (token == Vocabulary::kEos || dist[k] <= 0.0) continue;
        cands.push_back(
            {active[p].log_prob + std::log(dist[k]), static_cast<int32_t>(p), token});
      }
    }
    const size_t keep = std::min<size_t>(cands.size(), static_cast<size_t>(beam));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<ptrdiff_t>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hyp> next;
    next.reserve(keep);
    for (size_t i = 0; i < keep; ++i) {
      Hyp h;
      h.log_prob = cands[i].log_prob;
      h.prev = cands[i].token;
      h.state = new_states[static_cast<size_t>(cands[i].parent)];
      next.push_back(std::move(h));
    }
    active = std::move(next);
  }
}

double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

// Mean per-word milliseconds after discarding the slowest 10% of repetitions.
std::pair<double, double> summarize(std::vector<double> per_word_ms) {
  std::sort(per_word_ms.begin(), per_word_ms.end());
  const auto drop = static_cast<size_t>(static_cast<double>(per_word_ms.size()) * 0.1);
  per_word_ms.resize(per_word_ms.size() - drop);
  const double mean = mean_of(per_word_ms);
  return {mean, stddev_of(per_word_ms, mean)};
}

}  // namespace

FlopCounts projection_flops(int64_t p, int64_t m, int64_t vocab, int64_t selected,
                            int64_t len_r, int64_t len_m) {
  if (p <= 0 || m <= 0 || vocab <= 0 || selected <= 0 || len_r <= 0 || len_m <= 0)
    throw std::invalid_argument("projection_flops: arguments must be positive");
  FlopCounts f;
  f.static_macs = len_r * (m + p) * vocab;
  f.dynamic_macs = len_r * (m + p) * selected + m * vocab;
  f.ratio = static_cast<double>(f.dynamic_macs) / static_cast<double>(f.static_macs);
  return f;
}

TimingReport run_decode_benchmark(const BenchConfig& cfg) {
  if (cfg.repetitions < 5)
    throw std::invalid_argument("bench: repetitions must be >= 5");

  const Vocabulary vocab = synthetic_vocabulary(cfg);
  ModelDims dims;
  dims.vocab = cfg.vocab_size;
  dims.content = static_cast<int64_t>(vocab.content_indices().size());
  dims.embed = cfg.embed;
  dims.hidden = cfg.hidden;
  dims.attn = cfg.hidden;
  if (cfg.topk > dims.content)
    throw std::invalid_argument("bench: topk exceeds the content vocabulary");

  TimingReport report;
  report.config = cfg;
  try {
    const ModelParams params = init_model_params(dims, cfg.seed);

    Rng rng(Rng::mix(cfg.seed, 0xb3c4));
    std::vector<int32_t> message(static_cast<size_t>(cfg.len_m));
    for (auto& t : message)
      t = vocab.content_indices()[static_cast<size_t>(
          rng.below(static_cast<uint64_t>(dims.content)))];

    const Encoding enc = encode(message, params);
    const DecodeContext ctx(enc, params);
    const DynamicVocab full = DynamicVocab::full(static_cast<int32_t>(cfg.vocab_size));

    // Exact instrumented counts on a single-hypothesis pass of len_r steps.
    {
      OpCounter st;
      forced_beam_decode(enc, ctx, full, params, 1, cfg.len_r, &st);
      report.static_macs_counted = st.total();

      OpCounter dy;
      const BernoulliParams beta = predict_beta(enc, params, vocab, &dy);
      const DynamicVocab dyn = top_k_vocab(beta, cfg.topk, vocab);
      report.selected = dyn.size();
      forced_beam_decode(enc, ctx, dyn, params, 1, cfg.len_r, &dy);
      report.dynamic_macs_counted = dy.total();
    }
    report.formula = projection_flops(cfg.embed, cfg.hidden, cfg.vocab_size,
                                      report.selected, cfg.len_r, cfg.len_m);

    using Clock = std::chrono::steady_clock;
    auto ms_per_word = [&](auto&& body) {
      const auto t0 = Clock::now();
      body();
      const auto t1 = Clock::now();
      return std::chrono::duration<double, std::milli>(t1 - t0).count() /
             static_cast<double>(cfg.len_r);
    };

    // Warm-up runs are excluded from the statistics; repetitions interleave
    // the two modes so clock drift hits both means equally.
    forced_beam_decode(enc, ctx, full, params, cfg.beam, cfg.len_r, nullptr);
    {
      const BernoulliParams beta = predict_beta(enc, params, vocab);
      const DynamicVocab dyn = top_k_vocab(beta, cfg.topk, vocab);
      forced_beam_decode(enc, ctx, dyn, params, cfg.beam, cfg.len_r, nullptr);
    }
    std::vector<double> stat_ms, dyn_ms;
    for (int r = 0; r < cfg.repetitions; ++r) {
      stat_ms.push_back(ms_per_word(
          [&] { forced_beam_decode(enc, ctx, full, params, cfg.beam, cfg.len_r, nullptr); }));
      dyn_ms.push_back(ms_per_word([&] {
        const BernoulliParams beta = predict_beta(enc, params, vocab);
        const DynamicVocab dyn = top_k_vocab(beta, cfg.topk, vocab);
        forced_beam_decode(enc, ctx, dyn, params, cfg.beam, cfg.len_r, nullptr);
      }));
    }

    std::tie(report.static_per_word_ms, report.static_stddev_ms) = summarize(stat_ms);
    std::tie(report.dynamic_per_word_ms, report.dynamic_stddev_ms) = summarize(dyn_ms);
    report.ratio = report.dynamic_per_word_ms / report.static_per_word_ms;
  } catch (const std::bad_alloc&) {
    throw std::runtime_error(
        "bench: insufficient memory at the requested dimensions; retry with smaller "
        "--vocab-size or --dims");
  }
  return report;
}

std::string TimingReport::to_text() const {
  std::ostringstream os;
  os << "decode benchmark: p=" << config.embed << " m=" << config.hidden
     << " |V|=" << config.vocab_size << " |T|=" << selected << " beam=" << config.beam
     << " len_r=" << config.len_r << " reps=" << config.repetitions << '\n';
  os << "static:  " << static_per_word_ms << " ms/word (sd " << static_stddev_ms << ")\n";
  os << "dynamic: " << dynamic_per_word_ms << " ms/word (sd " << dynamic_stddev_ms << ")\n";
  os << "ratio (dynamic/static): " << ratio << '\n';
  os << "projection MACs counted: static " << static_macs_counted << ", dynamic "
     << dynamic_macs_counted << '\n';
  os << "projection MACs formula: static " << formula.static_macs << ", dynamic "
     << formula.dynamic_macs << ", ratio " << formula.ratio << '\n';
  return os.str();
}

std::string TimingReport::to_kv() const {
  std::ostringstream os;
  os << "p=" << config.embed << '\n' << "m=" << config.hidden << '\n';
  os << "vocab=" << config.vocab_size << '\n' << "selected=" << selected << '\n';
  os << "beam=" << config.beam << '\n' << "len_r=" << config.len_r << '\n';
  os << "repetitions=" << config.repetitions << '\n';
  os << "static_ms_per_word=" << static_per_word_ms << '\n';
  os << "static_ms_stddev=" << static_stddev_ms << '\n';
  os << "dynamic_ms_per_word=" << dynamic_per_word_ms << '\n';
  os << "dynamic_ms_stddev=" << dynamic_stddev_ms << '\n';
  os << "ratio=" << ratio << '\n';
  os << "static_macs_counted=" << static_macs_counted << '\n';
  os << "dynamic_macs_counted=" << dynamic_macs_counted << '\n';
  os << "static_macs_formula=" << formula.static_macs << '\n';
  os << "dynamic_macs_formula=" << formula.dynamic_macs << '\n';
  os << "macs_ratio_formula=" << formula.ratio << '\n';
  return os.str();
}

}  // namespace dvs2s
