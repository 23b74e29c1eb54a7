#pragma once

#include <cstdint>
#include <string>

#include "dvs2s/model.hpp"
#include "dvs2s/train_config.hpp"

namespace dvs2s {

// Checkpoint file: magic "DVS2S1", a UTF-8 header (configuration, vocabulary
// digest, then one line per tensor with name, element width and shape), a
// lone "data" line, and raw little-endian row-major payloads in header order.
struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  uint64_t vocab_digest = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainConfig& config, uint64_t vocab_digest);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dvs2s
