#pragma once

#include <cstdint>
#include <filesystem>

#include "rdbn/inference.hpp"
#include "rdbn/model.hpp"

namespace rdbn {

/// Everything needed to resume a run bit-exactly.
struct Checkpoint {
  Hyperparams hp;
  std::int64_t iteration = 0;
  LatentState state;
  PosteriorAccumulator posterior;
  SamplerCounters counters;
};

/// Writes a directory bundle: manifest.txt (hyperparameters, iteration,
/// dimensions, scalars) plus one CSV per variable family. Reals use 17
/// significant digits, so reloading is exact. The directory is replaced
/// atomically.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace rdbn
