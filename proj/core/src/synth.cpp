#include "dvs2s/synth.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dvs2s/rng.hpp"

namespace dvs2s {

namespace {

const std::vector<std::string>& function_pool() {
  static const std::vector<std::string> pool = {
      "the", "a",  "is",   "it",  "i",   "you", "my",  "we",   "and", "to",  "of",  "in",
      "so",  "what", "this", "that", "very", "not", "was", "are", "do", "have", "now", "yes"};
  return pool;
}

std::string synth_word(int64_t x) {
  static const char* syl[] = {"ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du",
                              "ka", "ke", "ki", "ko", "ku", "la", "le", "li", "lo", "lu",
                              "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "nu",
                              "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su",
                              "ta", "te", "ti", "to", "tu", "za", "ze", "zi", "zo", "zu"};
  constexpr int64_t n = 50;
  return std::string(syl[x % n]) + syl[(x / n) % n] + syl[(x / (n * n)) % n];
}

std::string make_pair_line(const SynthConfig& cfg, const SynthCorpus& corpus, int topic,
                           Rng& rng) {
  const auto& words = corpus.topic_words[static_cast<size_t>(topic)];
  auto content = [&]() {
    return words[static_cast<size_t>(rng.below(words.size()))];
  };
  auto function = [&]() {
    return corpus.function_words[static_cast<size_t>(rng.below(corpus.function_words.size()))];
  };

  std::ostringstream line;
  const auto msg_len =
      cfg.msg_min + static_cast<int>(rng.below(static_cast<uint64_t>(cfg.msg_max - cfg.msg_min + 1)));
  for (int i = 0; i < msg_len; ++i) {
    if (i) line << ' ';
    line << content();
  }
  line << '\t';

  const auto resp_len =
      cfg.resp_min + static_cast<int>(rng.below(static_cast<uint64_t>(cfg.resp_max - cfg.resp_min + 1)));
  std::vector<bool> is_content(static_cast<size_t>(resp_len));
  int n_content = 0;
  for (int i = 0; i < resp_len; ++i) {
    is_content[static_cast<size_t>(i)] = rng.next_double() < 0.6;
    if (is_content[static_cast<size_t>(i)]) ++n_content;
  }
  if (n_content < 2) {
    is_content[0] = is_content[1] = true;  // responses carry at least two content words
  }
  for (int i = 0; i < resp_len; ++i) {
    if (i) line << ' ';
    line << (is_content[static_cast<size_t>(i)] ? content() : function());
  }
  return line.str();
}

}  // namespace

SynthCorpus make_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.topics < 1 || cfg.content_per_topic < 1)
    throw std::invalid_argument("make_synthetic_corpus: bad configuration");
  if (cfg.msg_min < 1 || cfg.msg_max < cfg.msg_min || cfg.resp_min < 2 ||
      cfg.resp_max < cfg.resp_min)
    throw std::invalid_argument("make_synthetic_corpus: bad length bounds");

  SynthCorpus corpus;
  corpus.function_words = function_pool();
  corpus.topic_words.resize(static_cast<size_t>(cfg.topics));
  for (int t = 0; t < cfg.topics; ++t)
    for (int w = 0; w < cfg.content_per_topic; ++w)
      corpus.topic_words[static_cast<size_t>(t)].push_back(
          synth_word(static_cast<int64_t>(t) * cfg.content_per_topic + w));

  Rng train_rng(Rng::mix(cfg.seed, 1));
  for (int i = 0; i < cfg.train_pairs; ++i) {
    const int topic = static_cast<int>(train_rng.below(static_cast<uint64_t>(cfg.topics)));
    corpus.train.push_back(make_pair_line(cfg, corpus, topic, train_rng));
  }
  Rng valid_rng(Rng::mix(cfg.seed, 2));
  for (int i = 0; i < cfg.valid_pairs; ++i) {
    const int topic = static_cast<int>(valid_rng.below(static_cast<uint64_t>(cfg.topics)));
    corpus.valid.push_back(make_pair_line(cfg, corpus, topic, valid_rng));
  }
  Rng test_rng(Rng::mix(cfg.seed, 3));
  for (int i = 0; i < cfg.test_pairs; ++i) {
    const int topic = static_cast<int>(test_rng.below(static_cast<uint64_t>(cfg.topics)));
    corpus.test_topics.push_back(topic);
    corpus.test.push_back(make_pair_line(cfg, corpus, topic, test_rng));
  }
  return corpus;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_lines: cannot open " + path);
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw std::runtime_error("write_lines: write failed");
}

void write_synthetic_embeddings(const std::string& path,
                                const std::vector<std::string>& corpus_lines, int64_t dim,
                                uint64_t seed) {
  std::set<std::string> words;
  for (const auto& line : corpus_lines) {
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) words.insert(tok);
  }

  auto fnv = [](const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_synthetic_embeddings: cannot open " + path);
  out << words.size() << ' ' << dim << '\n';
  for (const auto& w : words) {
    Rng rng(Rng::mix(seed, fnv(w)));
    std::vector<double> v(static_cast<size_t>(dim));
    double norm = 0.0;
    for (auto& x : v) {
      x = rng.uniform(-1.0, 1.0);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    out << w;
    for (double x : v) out << ' ' << (norm > 0 ? x / norm : x);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_synthetic_embeddings: write failed");
}

}  // namespace dvs2s
