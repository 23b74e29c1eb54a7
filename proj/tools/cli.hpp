#pragma once

#include <string>
#include <vector>

#include "dvs2s/train_config.hpp"

namespace dvs2s::cli {

// Merged view of the config file (key=value lines) and command-line flags;
// flags win. Unknown keys in the file are rejected.
struct RunConfig {
  TrainConfig train;
  int beam = 20;
  int max_len = 50;
  int64_t vocab_max_size = 30000;
  int64_t function_min_count = 10;
};

// Applies a key=value config file ('#' comments allowed). Throws
// std::invalid_argument on unknown keys or malformed lines.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Entry point used by main() and by the integration tests; `args` excludes
// the program name. Returns 0 on success, 1 on usage errors, 2 on runtime
// errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace dvs2s::cli
