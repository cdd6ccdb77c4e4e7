#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "deskbert/encoder/encoder.hpp"
#include "deskbert/harness/config.hpp"
#include "deskbert/optim/optimizer.hpp"

namespace deskbert::harness {

inline constexpr int kCheckpointFormatVersion = 1;

// Directory layout: manifest.json, params.bin (little-endian float32 in
// manifest order) and optstate.bin (little-endian float64: step, then for
// each tensor the full-precision master values, m and v).
struct Checkpoint {
  nlohmann::json manifest;
  RunConfig config;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<Tensor> stored;  // float32-narrowed parameters
  std::vector<Tensor> master;  // full precision
  optim::OptimizerState optimizer;
};

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, const ParameterStore& params,
                     const optim::OptimizerState& state, std::uint64_t step, const nlohmann::json& metrics);

// Throws UserError on a missing file, version mismatch or payload whose size
// disagrees with the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Copies the checkpoint into `params` (full-precision masters when
// `use_master`, else the stored float32 values). Throws UserError naming the
// first tensor whose name or shape differs.
void restore_parameters(const Checkpoint& ckpt, ParameterStore& params, bool use_master = true);

// Parameter values narrowed to float32 and widened back.
double narrow_to_float(double x);

}  // namespace deskbert::harness
