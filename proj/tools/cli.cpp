#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dvs2s/beam.hpp"
#include "dvs2s/bench.hpp"
#include "dvs2s/checkpoint.hpp"
#include "dvs2s/corpus.hpp"
#include "dvs2s/metrics.hpp"
#include "dvs2s/synth.hpp"
#include "dvs2s/training.hpp"

namespace dvs2s::cli {

namespace {

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  TrainConfig& t = cfg.train;
  if (key == "embed") t.embed = std::stoll(value);
  else if (key == "hidden") t.hidden = std::stoll(value);
  else if (key == "attn") t.attn = std::stoll(value);
  else if (key == "samples") t.mc_samples = std::stoi(value);
  else if (key == "batch") t.batch_size = std::stoi(value);
  else if (key == "lr") t.lr = std::stod(value);
  else if (key == "baseline-decay") t.baseline_decay = std::stod(value);
  else if (key == "max-epochs") t.max_epochs = std::stoi(value);
  else if (key == "pretrain-epochs") t.pretrain_epochs = std::stoi(value);
  else if (key == "predictor-epochs") t.predictor_epochs = std::stoi(value);
  else if (key == "seed") t.seed = std::stoull(value);
  else if (key == "topk") t.topk_content = std::stoll(value);
  else if (key == "beta-clip") t.beta_clip = std::stod(value);
  else if (key == "grad-clip") t.grad_clip = std::stod(value);
  else if (key == "workers") t.workers = std::stoi(value);
  else if (key == "beam") cfg.beam = std::stoi(value);
  else if (key == "max-len") cfg.max_len = std::stoi(value);
  else if (key == "vocab-max-size") cfg.vocab_max_size = std::stoll(value);
  else if (key == "function-min-count") cfg.function_min_count = std::stoll(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void apply_config_file_impl(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
    size_t start = 0;
    while (start < line.size() && (line[start] == ' ' || line[start] == '\t')) ++start;
    if (start >= line.size()) continue;
    const auto eq = line.find('=', start);
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value");
    set_key(cfg, line.substr(start, eq - start), line.substr(eq + 1));
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> toks;
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

Checkpoint load_checked(const std::string& ckpt_path, const Vocabulary& vocab) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  if (ck.vocab_digest != vocab.digest())
    throw std::runtime_error("checkpoint " + ckpt_path +
                             " was trained with a different vocabulary");
  if (ck.params.dims.vocab != vocab.size())
    throw std::runtime_error("checkpoint vocabulary size mismatch");
  return ck;
}

struct LogSink {
  std::ofstream file;
  std::ostream* stream = nullptr;

  explicit LogSink(const std::string& path) {
    if (path.empty() || path == "-") {
      stream = &std::cout;
    } else {
      file.open(path);
      if (!file) throw std::runtime_error("cannot open log file " + path);
      stream = &file;
    }
  }
};

void add_train_dims(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--embed", cfg.train.embed, "word embedding size p");
  cmd->add_option("--hidden", cfg.train.hidden, "hidden vector size m");
  cmd->add_option("--attn", cfg.train.attn, "attention projection size (default m)");
  cmd->add_option("--batch", cfg.train.batch_size, "mini-batch size");
  cmd->add_option("--lr", cfg.train.lr, "initial learning-rate scale");
  cmd->add_option("--seed", cfg.train.seed, "random seed");
  cmd->add_option("--workers", cfg.train.workers, "per-batch gradient workers");
  cmd->add_option("--grad-clip", cfg.train.grad_clip, "global gradient-norm clip");
}

int make_corpus_cmd(const std::string& dir, int topics, int words, int train_n, int valid_n,
                    int test_n, uint64_t seed, int64_t embed_dim) {
  SynthConfig sc;
  sc.topics = topics;
  sc.content_per_topic = words;
  sc.train_pairs = train_n;
  sc.valid_pairs = valid_n;
  sc.test_pairs = test_n;
  sc.seed = seed;
  const SynthCorpus corpus = make_synthetic_corpus(sc);

  std::filesystem::create_directories(dir);
  write_lines(dir + "/train.txt", corpus.train);
  write_lines(dir + "/valid.txt", corpus.valid);
  write_lines(dir + "/test.txt", corpus.test);
  std::vector<std::string> all = corpus.train;
  all.insert(all.end(), corpus.valid.begin(), corpus.valid.end());
  all.insert(all.end(), corpus.test.begin(), corpus.test.end());
  write_synthetic_embeddings(dir + "/embeddings.txt", all, embed_dim, seed);

  std::cout << "wrote " << corpus.train.size() << " train / " << corpus.valid.size()
            << " valid / " << corpus.test.size() << " test pairs to " << dir << '\n';
  return 0;
}

int generate_cmd(const RunConfig& cfg, const std::string& ckpt_path,
                 const std::string& vocab_path, const std::string& input_path,
                 const std::string& output_path) {
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const Checkpoint ck = load_checked(ckpt_path, vocab);

  std::istream* in = &std::cin;
  std::ifstream fin;
  if (!input_path.empty() && input_path != "-") {
    fin.open(input_path);
    if (!fin) throw std::runtime_error("cannot open " + input_path);
    in = &fin;
  }
  std::ostream* out = &std::cout;
  std::ofstream fout;
  if (!output_path.empty() && output_path != "-") {
    fout.open(output_path);
    if (!fout) throw std::runtime_error("cannot open " + output_path);
    out = &fout;
  }

  std::string line;
  int64_t lineno = 0;
  while (std::getline(*in, line)) {
    ++lineno;
    std::vector<int32_t> message;
    for (const auto& tok : split_tokens(line)) message.push_back(vocab.lookup(tok));
    if (message.empty())
      throw std::runtime_error("generate: empty message on line " + std::to_string(lineno));
    const auto response = generate(message, ck.params, vocab, cfg.train.topk_content,
                                   cfg.beam, cfg.max_len);
    const auto words = detokenize(response, vocab);
    for (size_t i = 0; i < words.size(); ++i) {
      if (i) *out << ' ';
      *out << words[i];
    }
    *out << '\n';
  }
  return 0;
}

int eval_cmd(const RunConfig& cfg, const std::string& hyps_path, const std::string& refs_path,
             const std::string& embeddings_path, const std::string& ckpt_path,
             const std::string& messages_path, const std::string& vocab_path,
             const std::string& out_path) {
  std::vector<TokenList> hyps, refs;
  for (const auto& line : read_lines(hyps_path)) hyps.push_back(split_tokens(line));
  for (const auto& line : read_lines(refs_path)) refs.push_back(split_tokens(line));
  if (hyps.size() != refs.size())
    throw std::runtime_error("eval: hypothesis/reference line counts differ");

  std::optional<EmbeddingTable> table;
  if (!embeddings_path.empty()) table = EmbeddingTable::load(embeddings_path);
  MetricReport report = evaluate_corpus(hyps, refs, table ? &*table : nullptr);

  if (!ckpt_path.empty()) {
    if (messages_path.empty() || vocab_path.empty())
      throw std::runtime_error("eval: recall needs --messages and --vocab");
    const Vocabulary vocab = Vocabulary::load(vocab_path);
    const Checkpoint ck = load_checked(ckpt_path, vocab);
    const auto msg_lines = read_lines(messages_path);
    if (msg_lines.size() != refs.size())
      throw std::runtime_error("eval: message/reference line counts differ");

    const auto k = std::min<int64_t>(cfg.train.topk_content,
                                     static_cast<int64_t>(vocab.content_indices().size()));
    std::vector<DynamicVocab> vocabularies;
    std::vector<std::vector<int32_t>> responses;
    for (size_t i = 0; i < msg_lines.size(); ++i) {
      std::vector<int32_t> message;
      for (const auto& tok : split_tokens(msg_lines[i])) message.push_back(vocab.lookup(tok));
      if (message.empty())
        throw std::runtime_error("eval: empty message on line " + std::to_string(i + 1));
      const Encoding enc = encode(message, ck.params);
      vocabularies.push_back(top_k_vocab(predict_beta(enc, ck.params, vocab), k, vocab));
      // Reference words outside the vocabulary cannot be predicted; they are
      // dropped rather than folded into <unk>.
      std::vector<int32_t> ref_ids;
      for (const auto& tok : refs[i]) {
        const int32_t id = vocab.lookup(tok);
        if (id != Vocabulary::kUnk || tok == Vocabulary::special_string(Vocabulary::kUnk))
          ref_ids.push_back(id);
      }
      if (ref_ids.empty()) ref_ids.push_back(Vocabulary::kEos);
      responses.push_back(std::move(ref_ids));
    }
    report.recall = recall_coverage(vocabularies, responses);
    report.has_recall = true;
  }

  std::cout << report.to_text();
  std::cout << report.to_kv();
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    out << report.to_kv();
  }
  return 0;
}

int chat_cmd(const RunConfig& cfg, const std::string& ckpt_path, const std::string& vocab_path,
             bool verbose) {
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const Checkpoint ck = load_checked(ckpt_path, vocab);
  const auto k = std::min<int64_t>(cfg.train.topk_content,
                                   static_cast<int64_t>(vocab.content_indices().size()));

  std::string line;
  while (true) {
    std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line)) break;  // EOF: clean exit
    const auto toks = split_tokens(line);
    if (toks.empty()) continue;
    std::vector<int32_t> message;
    for (const auto& tok : toks) message.push_back(vocab.lookup(tok));

    if (verbose) {
      const Encoding enc = encode(message, ck.params);
      const BernoulliParams beta = predict_beta(enc, ck.params, vocab);
      const auto kw = top_k_vocab(beta, std::min<int64_t>(10, k), vocab);
      std::vector<int32_t> content;
      for (int32_t id : kw.selected)
        if (!vocab.is_function(id)) content.push_back(id);
      std::sort(content.begin(), content.end(), [&](int32_t a, int32_t b) {
        if (beta.beta[a] != beta.beta[b]) return beta.beta[a] > beta.beta[b];
        return a < b;
      });
      std::cout << "keywords:";
      for (int32_t id : content) std::cout << ' ' << vocab.word(id);
      std::cout << '\n';
    }

    const auto response =
        generate(message, ck.params, vocab, k, cfg.beam, cfg.max_len);
    const auto words = detokenize(response, vocab);
    for (size_t i = 0; i < words.size(); ++i) {
      if (i) std::cout << ' ';
      std::cout << words[i];
    }
    std::cout << '\n';
  }
  std::cout << '\n';
  return 0;
}

bool parse_dims(const std::string& text, int64_t& p, int64_t& m) {
  std::istringstream is(text);
  std::string part;
  while (std::getline(is, part, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) return false;
    const std::string key = part.substr(0, eq);
    const int64_t value = std::stoll(part.substr(eq + 1));
    if (key == "p") p = value;
    else if (key == "m") m = value;
    else return false;
  }
  return true;
}

}  // namespace

void apply_config_file(RunConfig& cfg, const std::string& path) {
  apply_config_file_impl(cfg, path);
}

int run_cli(const std::vector<std::string>& args) {
  RunConfig cfg;

  // The config file seeds the defaults; explicit flags override it below.
  try {
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (config_path.empty()) {
      if (const char* env = std::getenv("DVS2S_CONFIG")) config_path = env;
    }
    if (!config_path.empty()) apply_config_file(cfg, config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  CLI::App app{"dynamic-vocabulary sequence-to-sequence response generation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 "key=value config file (env DVS2S_CONFIG is the fallback)");

  // make-corpus
  auto* mk = app.add_subcommand("make-corpus", "write the bundled synthetic topical corpus");
  std::string mk_dir;
  int mk_topics = 10, mk_words = 40, mk_train = 5000, mk_valid = 200, mk_test = 200;
  uint64_t mk_seed = 13;
  int64_t mk_dim = 16;
  mk->add_option("--out", mk_dir, "output directory")->required();
  mk->add_option("--topics", mk_topics, "number of topics");
  mk->add_option("--words-per-topic", mk_words, "content words per topic");
  mk->add_option("--pairs", mk_train, "training pairs");
  mk->add_option("--valid", mk_valid, "validation pairs");
  mk->add_option("--test", mk_test, "test pairs");
  mk->add_option("--seed", mk_seed, "generator seed");
  mk->add_option("--embedding-dim", mk_dim, "dimension of the synthetic embeddings");

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "build the vocabulary from a pair corpus");
  std::string bv_corpus, bv_out, bv_lexicon;
  bv->add_option("--corpus", bv_corpus, "training corpus")->required();
  bv->add_option("--out", bv_out, "vocabulary file to write")->required();
  bv->add_option("--max-size", cfg.vocab_max_size, "vocabulary size cap");
  bv->add_option("--function-min-count", cfg.function_min_count,
                 "minimum count for function words");
  bv->add_option("--content-lexicon", bv_lexicon,
                 "file listing content words (nouns/verbs/adjectives/adverbs)");

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "stage 1: static-vocabulary pretraining");
  std::string pt_corpus, pt_vocab, pt_out, pt_log;
  pt->add_option("--corpus", pt_corpus)->required();
  pt->add_option("--vocab", pt_vocab)->required();
  pt->add_option("--out", pt_out, "checkpoint to write")->required();
  pt->add_option("--epochs", cfg.train.pretrain_epochs, "pretraining epochs");
  pt->add_option("--log", pt_log, "training log file ('-' for stdout)");
  add_train_dims(pt, cfg);

  // pretrain-predictor
  auto* pp = app.add_subcommand("pretrain-predictor",
                                "stage 2: word predictor with frozen encoder");
  std::string pp_corpus, pp_vocab, pp_in, pp_out, pp_log;
  pp->add_option("--corpus", pp_corpus)->required();
  pp->add_option("--vocab", pp_vocab)->required();
  pp->add_option("--checkpoint", pp_in, "stage-1 checkpoint")->required();
  pp->add_option("--out", pp_out, "checkpoint to write")->required();
  pp->add_option("--epochs", cfg.train.predictor_epochs, "predictor epochs");
  pp->add_option("--log", pp_log, "training log file ('-' for stdout)");
  pp->add_option("--batch", cfg.train.batch_size, "mini-batch size");
  pp->add_option("--lr", cfg.train.lr, "learning-rate scale");
  pp->add_option("--workers", cfg.train.workers, "per-batch workers");

  // train
  auto* tr = app.add_subcommand("train", "stage 3: joint Monte-Carlo training");
  std::string tr_corpus, tr_valid, tr_vocab, tr_in, tr_out, tr_log;
  tr->add_option("--corpus", tr_corpus)->required();
  tr->add_option("--valid", tr_valid, "validation corpus")->required();
  tr->add_option("--vocab", tr_vocab)->required();
  tr->add_option("--checkpoint", tr_in, "stage-2 checkpoint")->required();
  tr->add_option("--out", tr_out, "checkpoint to write")->required();
  tr->add_option("--max-epochs", cfg.train.max_epochs, "epoch cap");
  tr->add_option("--samples", cfg.train.mc_samples, "Monte-Carlo samples per example");
  tr->add_option("--baseline-decay", cfg.train.baseline_decay, "baseline moving average");
  tr->add_option("--topk", cfg.train.topk_content, "validation vocabulary size");
  tr->add_option("--beta-clip", cfg.train.beta_clip, "inclusion probability clip");
  tr->add_option("--log", tr_log, "training log file ('-' for stdout)");
  add_train_dims(tr, cfg);

  // generate
  auto* ge = app.add_subcommand("generate", "decode responses for a message file");
  std::string ge_ckpt, ge_vocab, ge_in, ge_out;
  ge->add_option("--checkpoint", ge_ckpt)->required();
  ge->add_option("--vocab", ge_vocab)->required();
  ge->add_option("--input", ge_in, "messages, one per line ('-' for stdin)");
  ge->add_option("--output", ge_out, "responses, one per line ('-' for stdout)");
  ge->add_option("--topk", cfg.train.topk_content, "content words in the vocabulary");
  ge->add_option("--beam", cfg.beam, "beam size");
  ge->add_option("--max-len", cfg.max_len, "maximum response length");

  // eval
  auto* ev = app.add_subcommand("eval", "automatic metrics for generated responses");
  std::string ev_hyps, ev_refs, ev_emb, ev_ckpt, ev_msgs, ev_vocab, ev_out;
  ev->add_option("--hyps", ev_hyps, "generated responses")->required();
  ev->add_option("--refs", ev_refs, "ground-truth responses")->required();
  ev->add_option("--embeddings", ev_emb, "word vectors for the embedding metrics");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint for the recall measure");
  ev->add_option("--messages", ev_msgs, "messages matching --refs (recall)");
  ev->add_option("--vocab", ev_vocab, "vocabulary file (recall)");
  ev->add_option("--topk", cfg.train.topk_content, "content words in the vocabulary");
  ev->add_option("--out", ev_out, "write the key=value report here too");

  // bench
  auto* be = app.add_subcommand("bench", "static vs dynamic decode timing");
  BenchConfig bc;
  std::string be_dims;
  be->add_option("--dims", be_dims, "p=...,m=...");
  be->add_option("--vocab-size", bc.vocab_size, "full vocabulary size");
  be->add_option("--function-words", bc.function_words,
                 "function entries (including specials)");
  be->add_option("--topk", bc.topk, "content words selected in dynamic mode");
  be->add_option("--beam", bc.beam, "beam size");
  be->add_option("--len", bc.len_r, "decoded response length");
  be->add_option("--len-m", bc.len_m, "message length");
  be->add_option("--repeat", bc.repetitions, "timed repetitions");
  be->add_option("--seed", bc.seed, "weight seed");

  // chat
  auto* ch = app.add_subcommand("chat", "interactive REPL over a checkpoint");
  std::string ch_ckpt, ch_vocab;
  bool ch_verbose = false;
  ch->add_option("--checkpoint", ch_ckpt)->required();
  ch->add_option("--vocab", ch_vocab)->required();
  ch->add_option("--topk", cfg.train.topk_content, "content words in the vocabulary");
  ch->add_option("--beam", cfg.beam, "beam size");
  ch->add_option("--max-len", cfg.max_len, "maximum response length");
  ch->add_flag("--verbose", ch_verbose, "print the top predicted content words");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (mk->parsed())
      return make_corpus_cmd(mk_dir, mk_topics, mk_words, mk_train, mk_valid, mk_test,
                             mk_seed, mk_dim);

    if (bv->parsed()) {
      const auto vocab = Vocabulary::build(
          bv_corpus, cfg.vocab_max_size, cfg.function_min_count,
          bv_lexicon.empty() ? std::nullopt : std::make_optional(bv_lexicon));
      vocab.save(bv_out);
      std::cout << "vocabulary: " << vocab.size() << " entries ("
                << vocab.function_indices().size() << " function, "
                << vocab.content_indices().size() << " content) -> " << bv_out << '\n';
      return 0;
    }

    if (pt->parsed()) {
      const Vocabulary vocab = Vocabulary::load(pt_vocab);
      const auto pairs = load_corpus(pt_corpus, vocab);
      LogSink log(pt_log);
      const ModelParams params = pretrain_s2s(pairs, vocab, cfg.train, log.stream);
      save_checkpoint(pt_out, params, cfg.train, vocab.digest());
      std::cout << "pretrained on " << pairs.size() << " pairs -> " << pt_out << '\n';
      return 0;
    }

    if (pp->parsed()) {
      const Vocabulary vocab = Vocabulary::load(pp_vocab);
      const auto pairs = load_corpus(pp_corpus, vocab);
      Checkpoint ck = load_checked(pp_in, vocab);
      TrainConfig tc = cfg.train;
      tc.embed = ck.params.dims.embed;
      tc.hidden = ck.params.dims.hidden;
      tc.attn = ck.params.dims.attn;
      LogSink log(pp_log);
      pretrain_predictor(pairs, ck.params, vocab, tc, log.stream);
      save_checkpoint(pp_out, ck.params, tc, vocab.digest());
      std::cout << "predictor trained on " << pairs.size() << " pairs -> " << pp_out << '\n';
      return 0;
    }

    if (tr->parsed()) {
      const Vocabulary vocab = Vocabulary::load(tr_vocab);
      const auto pairs = load_corpus(tr_corpus, vocab);
      const auto valid = load_corpus(tr_valid, vocab);
      Checkpoint ck = load_checked(tr_in, vocab);
      TrainConfig tc = cfg.train;
      tc.embed = ck.params.dims.embed;
      tc.hidden = ck.params.dims.hidden;
      tc.attn = ck.params.dims.attn;
      TrainState state;
      state.params = std::move(ck.params);
      state.lr_scale = tc.lr;
      LogSink log(tr_log);
      const JointResult result = train_joint(pairs, valid, std::move(state), vocab, tc,
                                             log.stream);
      save_checkpoint(tr_out, result.best_params, tc, vocab.digest());
      std::cout << "joint training: " << result.epochs_run << " epochs, validation "
                << result.initial_valid << " -> " << result.best_valid << " -> " << tr_out
                << '\n';
      return 0;
    }

    if (ge->parsed()) return generate_cmd(cfg, ge_ckpt, ge_vocab, ge_in, ge_out);

    if (ev->parsed())
      return eval_cmd(cfg, ev_hyps, ev_refs, ev_emb, ev_ckpt, ev_msgs, ev_vocab, ev_out);

    if (be->parsed()) {
      if (!be_dims.empty() && !parse_dims(be_dims, bc.embed, bc.hidden))
        throw std::runtime_error("bench: --dims expects p=...,m=...");
      const TimingReport report = run_decode_benchmark(bc);
      std::cout << report.to_text();
      std::cout << report.to_kv();
      return 0;
    }

    if (ch->parsed()) return chat_cmd(cfg, ch_ckpt, ch_vocab, ch_verbose);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace dvs2s::cli
