#pragma once

// Counter-based random streams (Philox4x32-10). A stream is addressed by a
// 64-bit key and a 64-bit stream id, so draws for replication r of a cell do
// not depend on which thread or chunk generates them.

#include <array>
#include <cstdint>
#include <string_view>

namespace qsw::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

Counter philox4x32_10(Counter ctr, Key key) noexcept;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// FNV-1a over bytes; used to turn a canonical cell description into a key.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

Key derive_key(std::uint64_t seed, std::uint64_t cell_hash) noexcept;

inline constexpr std::string_view kGeneratorName = "philox4x32-10";
inline constexpr std::string_view kNormalMethod = "inverse-cdf (AS 241) on 53-bit uniforms";
inline constexpr std::string_view kChi2Method = "sum of squared normals";

class Stream {
  public:
    Stream(Key key, std::uint64_t stream_id) noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() noexcept;
    double normal() noexcept;
    /// Sum of df squared standard normals.
    double chi2(int df);

    std::uint64_t blocks_used() const noexcept { return block_; }

  private:
    Key key_;
    std::uint64_t stream_id_;
    std::uint64_t block_ = 0;
    Counter buffer_{};
    int available_ = 0;  // 64-bit words left in buffer_
};

}  // namespace qsw::rng
