#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dvs2s/model.hpp"

namespace dvs2s {

using TokenList = std::vector<std::string>;

// Word vectors in the classic text format: first line "count dim", then one
// "word v1 ... vd" line per word. Unknown words are skipped by the metrics.
class EmbeddingTable {
 public:
  static EmbeddingTable load(const std::string& path);

  void insert(const std::string& word, std::vector<double> vec);
  const std::vector<double>* find(const std::string& word) const;
  int64_t dim() const { return dim_; }
  size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, std::vector<double>> table_;
  int64_t dim_ = 0;
};

// Corpus-level BLEU with uniform weights over orders 1..n, clipped n-gram
// precision and brevity penalty; reported on the 0..100 scale.
double bleu_n(const std::vector<TokenList>& hypotheses,
              const std::vector<TokenList>& references, int n);

struct EmbeddingTriple {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
};

// Average = cosine of mean vectors; Extrema = cosine of the per-dimension
// values of largest magnitude (positive wins ties); Greedy = mean over both
// directions of the average best-match cosine. nullopt when either side has
// no in-table token (the pair is skipped and counted by the caller).
std::optional<EmbeddingTriple> embedding_metrics(const TokenList& hypothesis,
                                                 const TokenList& reference,
                                                 const EmbeddingTable& table);

// Distinct n-grams across all responses divided by the total n-gram count.
double distinct_n(const std::vector<TokenList>& responses, int n);

// Mean over instances of the fraction of distinct ground-truth words covered
// by the predicted vocabulary.
double recall_coverage(const std::vector<DynamicVocab>& vocabularies,
                       const std::vector<std::vector<int32_t>>& responses);

struct MetricReport {
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0;
  double average = 0.0, extrema = 0.0, greedy = 0.0;
  double distinct1 = 0.0, distinct2 = 0.0;
  double recall = 0.0;
  bool has_embeddings = false;
  bool has_recall = false;
  int64_t pairs = 0;
  int64_t embedding_skipped = 0;

  std::string to_text() const;
  std::string to_kv() const;
};

// BLEU-1/2/3 and distinct-1/2 always; embedding metrics when a table is
// given; recall is filled in by the caller when vocabularies are available.
MetricReport evaluate_corpus(const std::vector<TokenList>& hypotheses,
                             const std::vector<TokenList>& references,
                             const EmbeddingTable* table);

}  // namespace dvs2s
