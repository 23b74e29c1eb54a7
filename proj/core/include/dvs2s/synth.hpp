#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dvs2s {

// Generator for a small topical corpus: each topic owns a disjoint set of
// content words, messages and responses of a pair draw content words from the
// same topic, and a shared pool of function words provides the glue. Response
// content is therefore a deterministic function of the message topic, which
// makes the generator its own coverage oracle.
struct SynthConfig {
  int topics = 10;
  int content_per_topic = 40;
  int train_pairs = 5000;
  int valid_pairs = 200;
  int test_pairs = 200;
  int msg_min = 3, msg_max = 6;
  int resp_min = 5, resp_max = 9;
  uint64_t seed = 13;
};

struct SynthCorpus {
  std::vector<std::string> train, valid, test;  // "message TAB response" lines
  std::vector<int> test_topics;                 // topic of each test line
  std::vector<std::vector<std::string>> topic_words;
  std::vector<std::string> function_words;
};

SynthCorpus make_synthetic_corpus(const SynthConfig& cfg);

void write_lines(const std::string& path, const std::vector<std::string>& lines);

// Deterministic random unit vectors for every word occurring in the lines;
// written in the text embedding format ("count dim" header).
void write_synthetic_embeddings(const std::string& path,
                                const std::vector<std::string>& corpus_lines, int64_t dim,
                                uint64_t seed);

}  // namespace dvs2s
