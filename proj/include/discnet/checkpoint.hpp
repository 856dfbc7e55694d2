#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "discnet/model.hpp"
#include "discnet/optimizer.hpp"

namespace discnet {

inline constexpr int kCheckpointVersion = 1;

// Versioned container: one JSON header line (config, parameter names,
// shapes, byte offsets, optimizer scalars, epoch, RNG state) followed by
// raw little-endian 64-bit float blocks. save -> load -> save is
// byte-identical.
struct Checkpoint {
  ModelConfig config;
  int64_t epoch = 0;
  std::string rng_state;  // serialized mt19937_64
  AdamWConfig opt_config;
  int64_t opt_step = 0;
};

void save_checkpoint(const std::string& path, Model& model, AdamW& opt,
                     int64_t epoch, const std::string& rng_state);

// Rebuilds the model and optimizer from the file. Rejects version or
// parameter-name mismatches.
Checkpoint load_checkpoint(const std::string& path, Model& model_out,
                           std::unique_ptr<AdamW>& opt_out);

}  // namespace discnet
