#pragma once

#include <cstdint>
#include <string>

#include "dvs2s/model.hpp"

namespace dvs2s {

struct BenchConfig {
  int64_t embed = 620;           // p
  int64_t hidden = 1024;         // m
  int64_t vocab_size = 30000;    // |V|
  int64_t function_words = 701;  // function entries including the 4 specials
  int64_t topk = 1000;           // content words selected at inference
  int beam = 20;
  int len_r = 15;  // decoded response length
  int len_m = 15;  // message length
  int repetitions = 10;
  uint64_t seed = 7;
};

struct FlopCounts {
  int64_t static_macs = 0;   // len_r (m + p) |V|
  int64_t dynamic_macs = 0;  // len_r (m + p) |T| + m |V|
  double ratio = 0.0;
};

// Closed-form multiply-accumulate counts of the projection (static) and the
// projection plus vocabulary construction (dynamic) in the decoding cost
// model; `selected` is |T| = topk + function words.
FlopCounts projection_flops(int64_t p, int64_t m, int64_t vocab, int64_t selected,
                            int64_t len_r, int64_t len_m);

struct TimingReport {
  BenchConfig config;
  int64_t selected = 0;  // |T| actually decoded in dynamic mode
  double static_per_word_ms = 0.0;
  double static_stddev_ms = 0.0;
  double dynamic_per_word_ms = 0.0;
  double dynamic_stddev_ms = 0.0;
  double ratio = 0.0;  // dynamic / static
  int64_t static_macs_counted = 0;
  int64_t dynamic_macs_counted = 0;
  FlopCounts formula;

  std::string to_text() const;
  std::string to_kv() const;
};

// Times static (full V) against dynamic (top-K + predictor) beam decoding on
// a random-weight model at the given dimensions: fixed-length decode with the
// end token kept out of the beam so both modes do len_r full steps, means
// over repetitions after dropping the slowest 10%, and exact instrumented
// op counts that must equal projection_flops.
TimingReport run_decode_benchmark(const BenchConfig& cfg);

}  // namespace dvs2s
