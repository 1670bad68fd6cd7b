#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcfsr/config.hpp"
#include "gcfsr/nn.hpp"
#include "gcfsr/tensor.hpp"

namespace gcfsr {

// Binary layout, all integers little-endian:
//   "GCFS" u32 version
//   str config_text, u64 iteration, str rng_state
//   u32 tensor count, then per tensor: str name, u8 dtype, u32 ndim,
//     i64 dims[ndim], raw little-endian payload
//   u32 counter count, then per counter: str name, u64 value
// where str is u32 length followed by bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::uint64_t iteration = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::pair<std::string, std::uint64_t>> counters;

  // Throws CheckpointError for missing entries.
  const Tensor& tensor(const std::string& name) const;
  std::uint64_t counter(const std::string& name) const;
  // Parses config_text; an invalid config is a CheckpointError.
  ModelConfig config() const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(std::span<const std::uint8_t> bytes);

  // Written to a temporary file and renamed into place.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// Copies src into dst bit-exactly; shape or dtype mismatch is a CheckpointError.
void restore_tensor(Tensor& dst, const Tensor& src, const std::string& name);
// Loads every parameter of params from the tensors named prefix + name.
void load_params(const Checkpoint& checkpoint, const std::string& prefix, ParamSet& params);

}  // namespace gcfsr
