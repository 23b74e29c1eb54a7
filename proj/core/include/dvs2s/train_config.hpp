#pragma once

#include <cstdint>

namespace dvs2s {

struct TrainConfig {
  int64_t embed = 620;          // p
  int64_t hidden = 1024;        // m
  int64_t attn = -1;            // attention projection size, -1 = hidden
  int mc_samples = 5;           // S
  int batch_size = 64;
  double lr = 1.0;              // initial AdaDelta step scale, halved on schedule
  double baseline_decay = 0.9;
  int max_epochs = 10;
  int pretrain_epochs = 5;
  int predictor_epochs = 5;
  uint64_t seed = 1;
  int64_t topk_content = 1000;  // inference default
  double beta_clip = 1e-7;
  double grad_clip = 5.0;       // global-norm clip per batch
  int workers = 1;              // per-batch gradient parallelism
};

}  // namespace dvs2s
