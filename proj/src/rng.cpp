#include "qsw/rng.hpp"

#include <vector>

#include "qsw/error.hpp"
#include "qsw/kernels.hpp"
#include "qsw/numerics.hpp"

namespace qsw::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Counter philox4x32_10(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

Key derive_key(std::uint64_t seed, std::uint64_t cell_hash) noexcept {
    const std::uint64_t k = mix64(mix64(seed) ^ cell_hash);
    return {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

Stream::Stream(Key key, std::uint64_t stream_id) noexcept : key_(key), stream_id_(stream_id) {}

std::uint64_t Stream::next_u64() noexcept {
    if (available_ == 0) {
        const Counter ctr = {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                             static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
        buffer_ = philox4x32_10(ctr, key_);
        ++block_;
        available_ = 2;
    }
    const int idx = 2 - available_;
    --available_;
    return static_cast<std::uint64_t>(buffer_[2 * idx]) | (static_cast<std::uint64_t>(buffer_[2 * idx + 1]) << 32);
}

double Stream::uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Stream::normal() noexcept { return normal_quantile(uniform()); }

double Stream::chi2(int df) {
    if (df < 1) throw DomainError("chi-square draw needs df >= 1");
    thread_local std::vector<double> scratch;
    scratch.resize(static_cast<std::size_t>(df));
    for (double& z : scratch) z = normal();
    return kernels::sum_squares(scratch);
}

}  // namespace qsw::rng
