#include "dvs2s/beam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dvs2s {

bool hypothesis_less(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

std::vector<BeamHypothesis> beam_search(const Encoding& enc, const DynamicVocab& dyn,
                                        const ModelParams& params, int beam, int max_len) {
  if (beam < 1) throw std::invalid_argument("beam_search: beam must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");

  DecodeContext ctx(enc, params);
  std::vector<BeamHypothesis> active(1);
  active[0].state = enc.final;

  std::vector<BeamHypothesis> completed;
  auto worst_kept_completed = [&]() {
    // Only meaningful once `beam` hypotheses finished.
    std::vector<double> lps;
    lps.reserve(completed.size());
    for (const auto& h : completed) lps.push_back(h.log_prob);
    std::nth_element(lps.begin(), lps.begin() + (beam - 1), lps.end(),
                     std::greater<double>());
    return lps[static_cast<size_t>(beam - 1)];
  };

  struct Cand {
    double log_prob;
    int32_t parent;
    int32_t token;
  };
  auto cand_less = [&active](const Cand& a, const Cand& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    // Same step, same length; order by token sequence.
    const auto& ta = active[static_cast<size_t>(a.parent)].tokens;
    const auto& tb = active[static_cast<size_t>(b.parent)].tokens;
    if (a.parent != b.parent) {
      if (ta != tb) return ta < tb;
    }
    return a.token < b.token;
  };

  for (int step = 0; step < max_len && !active.empty(); ++step) {
    std::vector<Cand> cands;
    cands.reserve(active.size() * dyn.selected.size());
    for (size_t p = 0; p < active.size(); ++p) {
      const BeamHypothesis& hyp = active[p];
      const int32_t prev = hyp.tokens.empty() ? Vocabulary::kBos : hyp.tokens.back();
      auto [dist, h_new] = decode_step(prev, hyp.state, ctx, dyn, params);
      active[p].state = std::move(h_new);  // state after consuming `prev`
      for (int64_t k = 0; k < dist.size(); ++k) {
        if (dist[k] <= 0.0) continue;
        cands.push_back({hyp.log_prob + std::log(dist[k]), static_cast<int32_t>(p),
                         dyn.selected[static_cast<size_t>(k)]});
      }
    }
    const size_t keep = std::min<size_t>(cands.size(), static_cast<size_t>(beam));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<ptrdiff_t>(keep),
                      cands.end(), cand_less);
    cands.resize(keep);

    std::vector<BeamHypothesis> next;
    next.reserve(keep);
    for (const Cand& c : cands) {
      BeamHypothesis h;
      h.tokens = active[static_cast<size_t>(c.parent)].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      h.state = active[static_cast<size_t>(c.parent)].state;
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        completed.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    active = std::move(next);

    // Scores only decrease with length, so once `beam` finished hypotheses
    // dominate every active one there is nothing left to find.
    if (completed.size() >= static_cast<size_t>(beam) && !active.empty()) {
      double best_active = active[0].log_prob;
      for (const auto& h : active) best_active = std::max(best_active, h.log_prob);
      if (best_active <= worst_kept_completed()) break;
    }
  }

  std::sort(completed.begin(), completed.end(), hypothesis_less);
  if (completed.size() > static_cast<size_t>(beam)) completed.resize(static_cast<size_t>(beam));
  if (completed.size() < static_cast<size_t>(beam) && !active.empty()) {
    std::sort(active.begin(), active.end(), hypothesis_less);
    for (auto& h : active) {
      if (completed.size() >= static_cast<size_t>(beam)) break;
      completed.push_back(std::move(h));
    }
  }
  return completed;
}

std::vector<int32_t> generate(const std::vector<int32_t>& message, const ModelParams& params,
                              const Vocabulary& vocab, int64_t topk_content, int beam,
                              int max_len) {
  if (message.empty()) throw std::invalid_argument("generate: empty message");
  const Encoding enc = encode(message, params);
  const BernoulliParams beta = predict_beta(enc, params, vocab);
  const auto k = std::min<int64_t>(topk_content,
                                   static_cast<int64_t>(vocab.content_indices().size()));
  const DynamicVocab dyn = top_k_vocab(beta, k, vocab);
  const auto ranked = beam_search(enc, dyn, params, beam, max_len);
  if (ranked.empty()) return {};

  std::vector<int32_t> out;
  for (int32_t id : ranked.front().tokens)
    if (id != Vocabulary::kEos) out.push_back(id);
  return out;
}

}  // namespace dvs2s
