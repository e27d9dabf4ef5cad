#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "convseq/config.h"
#include "convseq/mocap.h"
#include "convseq/model.h"
#include "convseq/training.h"

namespace convseq {

class FingerprintMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  Config config;
  NormalizationStats stats;
  std::uint64_t iteration = 0;
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  AdamState generator_adam;
  AdamState discriminator_adam;

  std::size_t pose_dim() const { return stats.reduced_dim(); }
};

/// Layout: 8-byte magic "CSQCKPT\0", u32 version, u64 header length, JSON header
/// (config text, stats, fingerprint, tensor table), then little-endian f64 payload.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& checkpoint);
/// When `expected_fingerprint` is given, a checkpoint trained under different
/// normalization statistics is rejected with FingerprintMismatch.
Checkpoint load_checkpoint(const std::filesystem::path& file,
                           std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

std::string fingerprint_hex(std::uint64_t fingerprint);

}  // namespace convseq
