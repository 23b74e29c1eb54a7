#include "dvs2s/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dvs2s/rng.hpp"

namespace dvs2s {

DialogPair Batch::pair(int64_t r) const {
  DialogPair p;
  p.message.assign(messages.begin() + r * message_cols,
                   messages.begin() + r * message_cols + message_len[static_cast<size_t>(r)]);
  p.response.assign(responses.begin() + r * response_cols,
                    responses.begin() + r * response_cols + response_len[static_cast<size_t>(r)]);
  return p;
}

std::vector<DialogPair> load_corpus(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);

  std::vector<DialogPair> pairs;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("load_corpus: line " + std::to_string(lineno) +
                               ": missing TAB separator");
    DialogPair p;
    std::istringstream msg(line.substr(0, tab));
    std::string tok;
    while (msg >> tok) p.message.push_back(vocab.lookup(tok));
    std::istringstream resp(line.substr(tab + 1));
    while (resp >> tok) p.response.push_back(vocab.lookup(tok));
    if (p.message.empty() || p.response.empty())
      throw std::runtime_error("load_corpus: line " + std::to_string(lineno) +
                               ": empty message or response");
    p.response.push_back(Vocabulary::kEos);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<uint8_t> target_indicator(const std::vector<int32_t>& response,
                                      const Vocabulary& vocab) {
  if (response.empty())
    throw std::invalid_argument("target_indicator: empty response");
  std::vector<uint8_t> bits = vocab.function_mask();
  for (int32_t id : response) bits[static_cast<size_t>(id)] = 1;
  return bits;
}

std::vector<Batch> make_batches(const std::vector<DialogPair>& pairs, int64_t batch_size,
                                uint64_t seed) {
  if (batch_size < 1)
    throw std::invalid_argument("make_batches: batch_size must be >= 1");

  std::vector<int64_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  Rng rng(seed);
  for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)],
              order[static_cast<size_t>(rng.below(static_cast<uint64_t>(i + 1)))]);

  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    Batch b;
    b.rows = static_cast<int64_t>(end - start);
    for (size_t i = start; i < end; ++i) {
      const DialogPair& p = pairs[static_cast<size_t>(order[i])];
      b.message_cols = std::max<int64_t>(b.message_cols, static_cast<int64_t>(p.message.size()));
      b.response_cols = std::max<int64_t>(b.response_cols, static_cast<int64_t>(p.response.size()));
    }
    b.messages.assign(static_cast<size_t>(b.rows * b.message_cols), Vocabulary::kPad);
    b.responses.assign(static_cast<size_t>(b.rows * b.response_cols), Vocabulary::kPad);
    for (size_t i = start; i < end; ++i) {
      const DialogPair& p = pairs[static_cast<size_t>(order[i])];
      const auto r = static_cast<int64_t>(i - start);
      std::copy(p.message.begin(), p.message.end(),
                b.messages.begin() + r * b.message_cols);
      std::copy(p.response.begin(), p.response.end(),
                b.responses.begin() + r * b.response_cols);
      b.message_len.push_back(static_cast<int32_t>(p.message.size()));
      b.response_len.push_back(static_cast<int32_t>(p.response.size()));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<std::string> detokenize(const std::vector<int32_t>& tokens,
                                    const Vocabulary& vocab, bool strip_eos) {
  std::vector<std::string> out;
  for (int32_t id : tokens) {
    if (strip_eos && id == Vocabulary::kEos) continue;
    out.push_back(vocab.word(id));
  }
  return out;
}

}  // namespace dvs2s
