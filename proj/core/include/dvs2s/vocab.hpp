#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dvs2s {

enum class WordClass : uint8_t { Function, Content };

struct VocabEntry {
  std::string word;
  int64_t count = 0;
  WordClass cls = WordClass::Content;
};

// Ordered word table with the function/content split. Indices are dense, the
// four specials occupy slots 0..3 and are classed Function.
class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kBos = 1;
  static constexpr int32_t kEos = 2;
  static constexpr int32_t kUnk = 3;
  static constexpr int32_t kNumSpecials = 4;

  static const char* special_string(int32_t id);  // "<pad>", "<s>", "</s>", "<unk>"

  Vocabulary();  // specials only

  // Counts response-side words of a TAB-separated pair corpus and keeps the
  // max_size - 4 most frequent (ties by first occurrence). A kept word is
  // Function iff its count exceeds function_min_count and it is not a content
  // word; content membership comes from the lexicon file when given, else
  // from a built-in stopword list (listed words are the non-content ones).
  static Vocabulary build(const std::string& corpus_path, int64_t max_size,
                          int64_t function_min_count,
                          const std::optional<std::string>& content_lexicon);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int32_t size() const { return static_cast<int32_t>(entries_.size()); }
  const VocabEntry& entry(int32_t id) const { return entries_[static_cast<size_t>(id)]; }
  const std::string& word(int32_t id) const { return entries_[static_cast<size_t>(id)].word; }
  // Unknown words map to <unk>.
  int32_t lookup(const std::string& w) const;
  bool is_function(int32_t id) const {
    return entries_[static_cast<size_t>(id)].cls == WordClass::Function;
  }

  // Content entries in vocabulary order; position in this list is the row of
  // the word-predictor weight matrix.
  const std::vector<int32_t>& content_indices() const { return content_; }
  const std::vector<int32_t>& function_indices() const { return function_; }
  // -1 for non-content ids, else the position within content_indices().
  int32_t content_position(int32_t id) const { return content_pos_[static_cast<size_t>(id)]; }

  std::vector<uint8_t> function_mask() const;

  // FNV-1a over the serialized table; embedded in checkpoints.
  uint64_t digest() const;

  void append(VocabEntry e);  // test/build helper, keeps the index tables

 private:
  void rebuild_index();

  std::vector<VocabEntry> entries_;
  std::unordered_map<std::string, int32_t> index_;
  std::vector<int32_t> content_;
  std::vector<int32_t> function_;
  std::vector<int32_t> content_pos_;
};

// One word per line; used for the noun/verb/adjective/adverb list that marks
// content words during vocabulary construction.
std::vector<std::string> load_word_list(const std::string& path);

bool is_builtin_stopword(const std::string& word);

}  // namespace dvs2s
