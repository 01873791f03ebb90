#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "poseforge/adam.hpp"

namespace poseforge::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelCheckpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t iteration = 0;
  ConvNetParams<float> params;
  AdamState<float> adam;
  std::string config_echo;

  bool operator==(const ModelCheckpoint& o) const {
    return version == o.version && iteration == o.iteration && params == o.params && adam.m == o.adam.m &&
           adam.v == o.adam.v && adam.t == o.adam.t && config_echo == o.config_echo;
  }
};

/// Layout (little-endian): "PFCK", u32 version, u64 iteration, shape table (u32 count, then
/// per tensor u32 rank and dims), f32 parameter payloads in declaration order, f32 Adam first
/// and second moments in the same order, u64 Adam step, u32 length + config echo bytes.
/// Written to a temporary file and renamed.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);

/// Throws Error naming the checkpoint format on bad magic, version, shape table or truncation.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace poseforge::nn
