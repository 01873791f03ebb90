#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace poseforge {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or a missing input artifact. The CLI maps this to exit status 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent streams from one seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// FNV-1a over the bytes of `text`.
std::uint64_t hash_string(std::string_view text);

/// Deterministic generator for the stream (seed, name, index). Streams with different
/// names or indices are statistically independent.
Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(Rng& rng);

/// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Identifies one frame of one video.
struct FrameRef {
  std::string video_id;
  int frame_index = 0;

  auto operator<=>(const FrameRef&) const = default;
  bool operator==(const FrameRef&) const = default;
};

std::string to_string(const FrameRef& ref);

/// Run `fn(i)` for i in [0, n) on up to `threads` workers. Work is handed out in index
/// order, so results written by index are independent of the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Worker count from POSEFORGE_THREADS, falling back to hardware concurrency.
int default_threads();

}  // namespace poseforge
