#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "eta/model.hpp"

namespace eta {

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

/// Layout, all little-endian:
///   "ETAM", u32 version (= 1), u32 n, n bytes of config text ([model] section),
///   u64 users, items, categories, contexts,
///   u32 block count, then per block in Weights::for_each order:
///     u32 name length, name bytes, u32 rows, u32 cols, rows*cols f32 (column-major),
///   u64 n, n x i64 item -> category.
/// The hash family is not stored; it is rebuilt from the config seed.
std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config, const ModelParams& params);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ModelConfig& config, const ModelParams& params, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters as they come back from a checkpoint (weights rounded to f32).
ModelParams round_trip_f32(const ModelConfig& config, const ModelParams& params);

/// Refuses a precomputed fingerprint table that does not belong to the
/// model: shape must match and a spread of up to `probes` items must hash to
/// the stored fingerprints. Throws InvalidArgument naming the mismatch.
void verify_fingerprint_table(const FingerprintTable& table, const ModelParams& params,
                              const ModelConfig& config, std::size_t probes = 64);

}  // namespace eta
