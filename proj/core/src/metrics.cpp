#include "dvs2s/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dvs2s {

namespace {

std::unordered_map<std::string, int64_t> ngram_counts(const TokenList& tokens, int n) {
  std::unordered_map<std::string, int64_t> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += tokens[i + static_cast<size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = dot_kernel(a.data(), a.data(), static_cast<int64_t>(a.size()));
  const double nb = dot_kernel(b.data(), b.data(), static_cast<int64_t>(b.size()));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot_kernel(a.data(), b.data(), static_cast<int64_t>(a.size())) /
         (std::sqrt(na) * std::sqrt(nb));
}

std::vector<const std::vector<double>*> in_table(const TokenList& tokens,
                                                 const EmbeddingTable& table) {
  std::vector<const std::vector<double>*> out;
  for (const auto& w : tokens)
    if (const auto* v = table.find(w)) out.push_back(v);
  return out;
}

}  // namespace

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("EmbeddingTable::load: cannot open " + path);
  int64_t count = 0, dim = 0;
  in >> count >> dim;
  if (!in || dim <= 0)
    throw std::runtime_error("EmbeddingTable::load: bad header in " + path);
  EmbeddingTable table;
  table.dim_ = dim;
  for (int64_t i = 0; i < count; ++i) {
    std::string word;
    in >> word;
    std::vector<double> vec(static_cast<size_t>(dim));
    for (auto& v : vec) in >> v;
    if (!in) throw std::runtime_error("EmbeddingTable::load: truncated at word " +
                                      std::to_string(i));
    table.table_.emplace(std::move(word), std::move(vec));
  }
  return table;
}

void EmbeddingTable::insert(const std::string& word, std::vector<double> vec) {
  if (dim_ == 0) dim_ = static_cast<int64_t>(vec.size());
  if (static_cast<int64_t>(vec.size()) != dim_)
    throw std::invalid_argument("EmbeddingTable::insert: dimension mismatch");
  table_[word] = std::move(vec);
}

const std::vector<double>* EmbeddingTable::find(const std::string& word) const {
  auto it = table_.find(word);
  return it == table_.end() ? nullptr : &it->second;
}

double bleu_n(const std::vector<TokenList>& hypotheses,
              const std::vector<TokenList>& references, int n) {
  if (hypotheses.empty()) throw std::invalid_argument("bleu_n: empty corpus");
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("bleu_n: hypothesis/reference count mismatch");
  if (n < 1 || n > 4) throw std::invalid_argument("bleu_n: order out of range");

  std::vector<int64_t> matched(static_cast<size_t>(n), 0);
  std::vector<int64_t> total(static_cast<size_t>(n), 0);
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<int64_t>(hypotheses[i].size());
    ref_len += static_cast<int64_t>(references[i].size());
    for (int k = 1; k <= n; ++k) {
      const auto hyp = ngram_counts(hypotheses[i], k);
      const auto ref = ngram_counts(references[i], k);
      for (const auto& [gram, count] : hyp) {
        total[static_cast<size_t>(k - 1)] += count;
        auto it = ref.find(gram);
        if (it != ref.end())
          matched[static_cast<size_t>(k - 1)] += std::min(count, it->second);
      }
    }
  }

  double log_prec = 0.0;
  for (int k = 0; k < n; ++k) {
    if (total[static_cast<size_t>(k)] == 0 || matched[static_cast<size_t>(k)] == 0)
      return 0.0;
    log_prec += std::log(static_cast<double>(matched[static_cast<size_t>(k)]) /
                         static_cast<double>(total[static_cast<size_t>(k)])) /
                static_cast<double>(n);
  }
  if (hyp_len == 0) return 0.0;
  const double bp =
      hyp_len < ref_len
          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
          : 1.0;
  return 100.0 * bp * std::exp(log_prec);
}

std::optional<EmbeddingTriple> embedding_metrics(const TokenList& hypothesis,
                                                 const TokenList& reference,
                                                 const EmbeddingTable& table) {
  const auto hyp = in_table(hypothesis, table);
  const auto ref = in_table(reference, table);
  if (hyp.empty() || ref.empty()) return std::nullopt;
  const auto d = static_cast<size_t>(table.dim());

  EmbeddingTriple out;
  {
    std::vector<double> mh(d, 0.0), mr(d, 0.0);
    for (const auto* v : hyp) axpy(1.0 / static_cast<double>(hyp.size()), v->data(),
                                   mh.data(), static_cast<int64_t>(d));
    for (const auto* v : ref) axpy(1.0 / static_cast<double>(ref.size()), v->data(),
                                   mr.data(), static_cast<int64_t>(d));
    out.average = cosine(mh, mr);
  }
  {
    auto extrema = [&](const std::vector<const std::vector<double>*>& side) {
      std::vector<double> e(d);
      for (size_t j = 0; j < d; ++j) {
        double best = (*side[0])[j];
        for (size_t i = 1; i < side.size(); ++i) {
          const double x = (*side[i])[j];
          if (std::fabs(x) > std::fabs(best) || (std::fabs(x) == std::fabs(best) && x > best))
            best = x;
        }
        e[j] = best;
      }
      return e;
    };
    out.extrema = cosine(extrema(hyp), extrema(ref));
  }
  {
    auto directed = [](const std::vector<const std::vector<double>*>& from,
                       const std::vector<const std::vector<double>*>& to) {
      double acc = 0.0;
      for (const auto* a : from) {
        double best = -1.0;
        for (const auto* b : to) best = std::max(best, cosine(*a, *b));
        acc += best;
      }
      return acc / static_cast<double>(from.size());
    };
    out.greedy = 0.5 * (directed(hyp, ref) + directed(ref, hyp));
  }
  return out;
}

double distinct_n(const std::vector<TokenList>& responses, int n) {
  if (responses.empty()) throw std::invalid_argument("distinct_n: empty response list");
  std::set<std::string> distinct;
  int64_t total = 0;
  for (const auto& r : responses) {
    for (auto& [gram, count] : ngram_counts(r, n)) {
      distinct.insert(gram);
      total += count;
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double recall_coverage(const std::vector<DynamicVocab>& vocabularies,
                       const std::vector<std::vector<int32_t>>& responses) {
  if (vocabularies.size() != responses.size())
    throw std::invalid_argument("recall_coverage: list length mismatch");
  if (vocabularies.empty())
    throw std::invalid_argument("recall_coverage: empty input");

  double acc = 0.0;
  for (size_t i = 0; i < responses.size(); ++i) {
    std::set<int32_t> words(responses[i].begin(), responses[i].end());
    if (words.empty())
      throw std::invalid_argument("recall_coverage: empty response at " + std::to_string(i));
    int64_t covered = 0;
    for (int32_t w : words)
      if (vocabularies[i].contains(w)) ++covered;
    acc += static_cast<double>(covered) / static_cast<double>(words.size());
  }
  return acc / static_cast<double>(responses.size());
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << "pairs evaluated: " << pairs << '\n';
  os << "BLEU-1: " << bleu1 << "  BLEU-2: " << bleu2 << "  BLEU-3: " << bleu3 << '\n';
  if (has_embeddings)
    os << "Average: " << average << "  Extrema: " << extrema << "  Greedy: " << greedy
       << "  (skipped " << embedding_skipped << ")\n";
  os << "distinct-1: " << distinct1 << "  distinct-2: " << distinct2 << '\n';
  if (has_recall) os << "Recall: " << recall << '\n';
  return os.str();
}

std::string MetricReport::to_kv() const {
  std::ostringstream os;
  os << "pairs=" << pairs << '\n';
  os << "bleu1=" << bleu1 << '\n' << "bleu2=" << bleu2 << '\n' << "bleu3=" << bleu3 << '\n';
  if (has_embeddings) {
    os << "average=" << average << '\n' << "extrema=" << extrema << '\n'
       << "greedy=" << greedy << '\n' << "embedding_skipped=" << embedding_skipped << '\n';
  }
  os << "distinct1=" << distinct1 << '\n' << "distinct2=" << distinct2 << '\n';
  if (has_recall) os << "recall=" << recall << '\n';
  return os.str();
}

MetricReport evaluate_corpus(const std::vector<TokenList>& hypotheses,
                             const std::vector<TokenList>& references,
                             const EmbeddingTable* table) {
  MetricReport report;
  report.pairs = static_cast<int64_t>(hypotheses.size());
  report.bleu1 = bleu_n(hypotheses, references, 1);
  report.bleu2 = bleu_n(hypotheses, references, 2);
  report.bleu3 = bleu_n(hypotheses, references, 3);
  report.distinct1 = distinct_n(hypotheses, 1);
  report.distinct2 = distinct_n(hypotheses, 2);
  if (table) {
    report.has_embeddings = true;
    double a = 0.0, e = 0.0, g = 0.0;
    int64_t used = 0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
      const auto triple = embedding_metrics(hypotheses[i], references[i], *table);
      if (!triple) {
        ++report.embedding_skipped;
        continue;
      }
      a += triple->average;
      e += triple->extrema;
      g += triple->greedy;
      ++used;
    }
    if (used > 0) {
      report.average = a / static_cast<double>(used);
      report.extrema = e / static_cast<double>(used);
      report.greedy = g / static_cast<double>(used);
    }
  }
  return report;
}

}  // namespace dvs2s
