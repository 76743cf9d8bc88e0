#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ficots/model.hpp"
#include "ficots/tensor.hpp"

namespace ficots {

// Container format "FCCK" v1: magic, u16 version, then the serialized config
// snapshot, seed, best epoch, channel count, and named f64 parameter blobs.
// Little-endian, raw IEEE bits, so round-trips are exact.
struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  std::string config_text;  // serialized ExperimentConfig, no output dir
  std::uint64_t seed = 0;
  std::uint32_t best_epoch = 0;
  std::uint32_t channels = 0;

  struct Blob {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  std::vector<Blob> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint snapshot_model(const FiCoTSModel& model,
                          const std::string& config_text, std::uint64_t seed,
                          std::uint32_t best_epoch);
// Copies blob values into the model; names and shapes must match exactly.
void restore_model(FiCoTSModel& model, const Checkpoint& ck);

}  // namespace ficots
