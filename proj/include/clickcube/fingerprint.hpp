#pragma once

// Stable 64-bit fingerprints and per-unit Poisson(1) replicate weights.
//
// Two mixers are used:
//   h: byte fingerprint. 8-byte little-endian blocks are absorbed into a
//      state through the MurmurHash3 64-bit finalizer
//      (0xff51afd7ed558ccd, 0xc4ceb9fe1a85ec53, shifts 33/33/33), with the
//      input length folded into the initial state.
//   g: integer mixer. The SplitMix64 finalizer ("Mix13",
//      0xbf58476d1ce4e5b9, 0x94d049bb133111eb, shifts 30/27/31).
//
// The replicate-b weight of unit u draws one uniform from a SplitMix64
// stream seeded with g(h(u) + b) (wrapping addition) and maps it through the
// Poisson(1) inverse CDF. All outputs are bit-exact across platforms.

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace clickcube {

struct Fingerprint64 {
    std::uint64_t value = 0;

    friend constexpr bool operator==(Fingerprint64, Fingerprint64) = default;
    friend constexpr auto operator<=>(Fingerprint64, Fingerprint64) = default;
};

/// MurmurHash3 fmix64.
constexpr std::uint64_t fmix64(std::uint64_t x) noexcept {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

/// SplitMix64 output finalizer; this is g.
constexpr std::uint64_t mix13(std::uint64_t x) noexcept {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Fingerprint64 fingerprint(std::span<const std::byte> bytes) noexcept;
Fingerprint64 fingerprint(std::string_view text) noexcept;

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator so it can feed
/// the standard distributions.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix13(state_);
    }

private:
    std::uint64_t state_;
};

/// Maps 64 random bits to a double in [0, 1) using the top 53 bits.
constexpr double to_unit_interval(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Poisson(1) quantile function by sequential CDF search.
std::uint32_t poisson1_from_uniform(double u) noexcept;

/// Weight of a unit, given its fingerprint h(u), in replicate b.
std::uint32_t replicate_weight(Fingerprint64 unit_hash, std::uint64_t b) noexcept;
std::uint32_t replicate_weight(std::string_view unit_id, std::uint64_t b) noexcept;

/// Weights for replicates 0..B-1. Throws std::invalid_argument when B == 0.
std::vector<std::uint32_t> replicate_weights(std::string_view unit_id, std::size_t B);

/// Seed for an independent stream named `label` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept;

/// Seed for the index-th substream of `key`.
constexpr std::uint64_t substream_seed(std::uint64_t key, std::uint64_t index) noexcept {
    return mix13(key + mix13(index + 0x632be59bd9b4e019ULL));
}

}  // namespace clickcube
