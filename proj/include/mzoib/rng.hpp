#pragma once

#include <array>
#include <cstdint>

namespace mzoib {

// Counter-based uniform stream (Philox4x32-10). The key is the seed and the
// high half of the counter is the stream id, so any (seed, stream_id) pair
// reproduces the same sequence on every platform and distinct stream ids never
// share counter blocks.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();
  // 53-bit uniform on [0, 1).
  double uniform();
  // Uniform clipped to [lo, 1 - lo]; used before quantile transforms.
  double uniform_clipped(double lo = 1e-12);

  // Stream id for sub-stream `sub` of replicate `replicate`. Sub-stream 0 is
  // the replicate's own draws; bootstrap replicate b uses 1000 + b.
  static constexpr std::uint64_t nested_id(std::uint64_t replicate,
                                           std::uint64_t sub) {
    return (replicate << 32) | (sub & 0xffffffffULL);
  }

  // One Philox4x32-10 block; exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox_block(
      std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

}  // namespace mzoib
