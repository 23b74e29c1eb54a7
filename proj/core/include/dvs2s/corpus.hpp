#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dvs2s/vocab.hpp"

namespace dvs2s {

struct DialogPair {
  std::vector<int32_t> message;   // token indices
  std::vector<int32_t> response;  // token indices, ends with </s>
};

// Message/response index matrices padded with <pad> after the true lengths.
struct Batch {
  int64_t rows = 0;
  int64_t message_cols = 0;
  int64_t response_cols = 0;
  std::vector<int32_t> messages;   // rows x message_cols, row-major
  std::vector<int32_t> responses;  // rows x response_cols, row-major
  std::vector<int32_t> message_len;
  std::vector<int32_t> response_len;

  DialogPair pair(int64_t r) const;
};

// One pair per line, "message TAB response", tokens space-separated.
// Out-of-vocabulary tokens become <unk>; </s> is appended to each response.
std::vector<DialogPair> load_corpus(const std::string& path, const Vocabulary& vocab);

// Bit j = 1 iff word j is a function word or occurs in the response. The
// word-predictor pretraining target.
std::vector<uint8_t> target_indicator(const std::vector<int32_t>& response,
                                      const Vocabulary& vocab);

// Deterministic shuffle under seed, then contiguous slices; the last batch
// may be short.
std::vector<Batch> make_batches(const std::vector<DialogPair>& pairs, int64_t batch_size,
                                uint64_t seed);

std::vector<std::string> detokenize(const std::vector<int32_t>& tokens,
                                    const Vocabulary& vocab, bool strip_eos = true);

}  // namespace dvs2s
