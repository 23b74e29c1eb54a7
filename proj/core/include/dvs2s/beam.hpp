#pragma once

#include <cstdint>
#include <vector>

#include "dvs2s/model.hpp"

namespace dvs2s {

struct BeamHypothesis {
  std::vector<int32_t> tokens;  // ends with </s> iff finished
  double log_prob = 0.0;
  Tensor state;
  bool finished = false;
};

// Ordering used everywhere hypotheses are ranked: higher log_prob first,
// ties by shorter length, then lexicographic token order.
bool hypothesis_less(const BeamHypothesis& a, const BeamHypothesis& b);

// Standard beam search restricted to dyn. Finished hypotheses leave the
// active beam for a completed pool; the returned list holds up to `beam`
// finished hypotheses, padded with the best unfinished ones if fewer finish
// within max_len steps.
std::vector<BeamHypothesis> beam_search(const Encoding& enc, const DynamicVocab& dyn,
                                        const ModelParams& params, int beam, int max_len);

// encode -> predict_beta -> top_k_vocab -> beam_search, top-1 without </s>.
std::vector<int32_t> generate(const std::vector<int32_t>& message, const ModelParams& params,
                              const Vocabulary& vocab, int64_t topk_content, int beam,
                              int max_len);

}  // namespace dvs2s
