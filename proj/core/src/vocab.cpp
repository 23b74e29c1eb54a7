#include "dvs2s/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace dvs2s {

namespace {

const std::unordered_set<std::string>& builtin_stopwords() {
  // Fallback function-word inventory for corpora without a POS lexicon.
  static const std::unordered_set<std::string> words = {
      "a",    "an",    "the",  "and",  "or",    "but",  "if",    "then",  "than",
      "so",   "as",    "of",   "at",   "by",    "for",  "with",  "about", "into",
      "to",   "from",  "up",   "down", "in",    "out",  "on",    "off",   "over",
      "under", "again", "once", "here", "there", "when", "where", "why",   "how",
      "all",  "any",   "both", "each", "few",   "more", "most",  "other", "some",
      "such", "no",    "nor",  "not",  "only",  "own",  "same",  "too",   "very",
      "can",  "will",  "just", "don",  "should", "now",  "i",     "me",    "my",
      "we",   "our",   "you",  "your", "he",    "him",  "his",   "she",   "her",
      "it",   "its",   "they", "them", "their", "what", "which", "who",   "whom",
      "this", "that",  "these", "those", "am",   "is",   "are",   "was",   "were",
      "be",   "been",  "being", "have", "has",  "had",  "do",    "does",  "did",
      "yes",  "oh",    "well", "really", "quite", "also", "because", "while", "until",
  };
  return words;
}

}  // namespace

bool is_builtin_stopword(const std::string& word) {
  return builtin_stopwords().count(word) > 0;
}

const char* Vocabulary::special_string(int32_t id) {
  switch (id) {
    case kPad: return "<pad>";
    case kBos: return "<s>";
    case kEos: return "</s>";
    case kUnk: return "<unk>";
    default: throw std::invalid_argument("special_string: not a special id");
  }
}

Vocabulary::Vocabulary() {
  for (int32_t i = 0; i < kNumSpecials; ++i)
    entries_.push_back({special_string(i), 0, WordClass::Function});
  rebuild_index();
}

void Vocabulary::append(VocabEntry e) {
  entries_.push_back(std::move(e));
  rebuild_index();
}

void Vocabulary::rebuild_index() {
  index_.clear();
  content_.clear();
  function_.clear();
  content_pos_.assign(entries_.size(), -1);
  for (size_t i = 0; i < entries_.size(); ++i) {
    const auto id = static_cast<int32_t>(i);
    if (!index_.emplace(entries_[i].word, id).second)
      throw std::runtime_error("Vocabulary: duplicate word '" + entries_[i].word + "'");
    if (entries_[i].cls == WordClass::Content) {
      content_pos_[i] = static_cast<int32_t>(content_.size());
      content_.push_back(id);
    } else {
      function_.push_back(id);
    }
  }
}

int32_t Vocabulary::lookup(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<uint8_t> Vocabulary::function_mask() const {
  std::vector<uint8_t> mask(entries_.size(), 0);
  for (int32_t id : function_) mask[static_cast<size_t>(id)] = 1;
  return mask;
}

uint64_t Vocabulary::digest() const {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto feed = [&h](const char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(p[i]);
      h *= 1099511628211ull;
    }
  };
  for (const auto& e : entries_) {
    feed(e.word.data(), e.word.size());
    const char sep[3] = {'\t', e.cls == WordClass::Function ? 'F' : 'C', '\n'};
    feed(sep, 3);
    auto c = static_cast<uint64_t>(e.count);
    feed(reinterpret_cast<const char*>(&c), sizeof(c));
  }
  return h;
}

Vocabulary Vocabulary::build(const std::string& corpus_path, int64_t max_size,
                             int64_t function_min_count,
                             const std::optional<std::string>& content_lexicon) {
  if (max_size < kNumSpecials)
    throw std::invalid_argument("build_vocabulary: max_size must be >= 4");

  std::unordered_set<std::string> lexicon;
  bool have_lexicon = false;
  if (content_lexicon) {
    for (auto& w : load_word_list(*content_lexicon)) lexicon.insert(std::move(w));
    have_lexicon = true;
  }

  std::ifstream in(corpus_path);
  if (!in) throw std::runtime_error("build_vocabulary: cannot open " + corpus_path);

  struct Stat {
    int64_t count = 0;
    int64_t first_seen = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  int64_t running = 0;
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;  // load_corpus reports malformed lines
    std::istringstream resp(line.substr(tab + 1));
    std::string tok;
    while (resp >> tok) {
      auto [it, fresh] = stats.try_emplace(tok);
      if (fresh) it->second.first_seen = running++;
      ++it->second.count;
    }
  }

  std::vector<const std::pair<const std::string, Stat>*> ranked;
  ranked.reserve(stats.size());
  for (const auto& kv : stats) ranked.push_back(&kv);
  std::sort(ranked.begin(), ranked.end(), [](const auto* a, const auto* b) {
    if (a->second.count != b->second.count) return a->second.count > b->second.count;
    return a->second.first_seen < b->second.first_seen;
  });

  Vocabulary v;
  const auto keep = static_cast<size_t>(max_size - kNumSpecials);
  for (size_t i = 0; i < ranked.size() && i < keep; ++i) {
    const std::string& w = ranked[i]->first;
    const int64_t count = ranked[i]->second.count;
    const bool frequent = count > function_min_count;
    const bool non_content = have_lexicon ? lexicon.count(w) == 0 : is_builtin_stopword(w);
    v.entries_.push_back(
        {w, count, frequent && non_content ? WordClass::Function : WordClass::Content});
  }
  v.rebuild_index();
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Vocabulary::save: cannot open " + path);
  for (const auto& e : entries_)
    out << e.word << '\t' << e.count << '\t'
        << (e.cls == WordClass::Function ? 'F' : 'C') << '\n';
  if (!out) throw std::runtime_error("Vocabulary::save: write failed");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path);
  Vocabulary v;
  v.entries_.clear();
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw std::runtime_error("Vocabulary::load: malformed line " + std::to_string(lineno));
    VocabEntry e;
    e.word = line.substr(0, t1);
    e.count = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
    const std::string cls = line.substr(t2 + 1);
    if (cls == "F")
      e.cls = WordClass::Function;
    else if (cls == "C")
      e.cls = WordClass::Content;
    else
      throw std::runtime_error("Vocabulary::load: bad class on line " + std::to_string(lineno));
    v.entries_.push_back(std::move(e));
  }
  for (int32_t i = 0; i < kNumSpecials; ++i) {
    if (static_cast<size_t>(i) >= v.entries_.size() ||
        v.entries_[static_cast<size_t>(i)].word != special_string(i))
      throw std::runtime_error("Vocabulary::load: specials missing or out of order");
  }
  v.rebuild_index();
  return v;
}

std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_word_list: cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace dvs2s
