#include "clickcube/fingerprint.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace clickcube {

namespace {

constexpr std::uint64_t kLengthSeed = 0x9ae16a3b2f90404fULL;
constexpr std::uint64_t kBlockMul = 0x87c37b91114253d5ULL;
constexpr std::uint64_t kBlockAdd = 0x52dce729ULL;

std::uint64_t load_le(const std::byte* p, std::size_t len) noexcept {
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < len; ++i) {
        word |= static_cast<std::uint64_t>(std::to_integer<unsigned>(p[i])) << (8 * i);
    }
    return word;
}

constexpr std::uint32_t kPoissonSearchCap = 40;

}  // namespace

Fingerprint64 fingerprint(std::span<const std::byte> bytes) noexcept {
    std::uint64_t state = kLengthSeed ^ (static_cast<std::uint64_t>(bytes.size()) * kBlockMul);
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t len = std::min<std::size_t>(8, bytes.size() - offset);
        const std::uint64_t block = load_le(bytes.data() + offset, len);
        state = fmix64(state ^ block) * kBlockMul + kBlockAdd;
        offset += len;
    }
    return Fingerprint64{fmix64(state)};
}

Fingerprint64 fingerprint(std::string_view text) noexcept {
    return fingerprint(std::as_bytes(std::span(text.data(), text.size())));
}

std::uint32_t poisson1_from_uniform(double u) noexcept {
    // pmf(k) = e^-1 / k!
    double pmf = std::exp(-1.0);
    double cdf = pmf;
    std::uint32_t k = 0;
    while (u >= cdf && k < kPoissonSearchCap) {
        ++k;
        pmf /= static_cast<double>(k);
        cdf += pmf;
    }
    return k;
}

std::uint32_t replicate_weight(Fingerprint64 unit_hash, std::uint64_t b) noexcept {
    SplitMix64 rng(mix13(unit_hash.value + b));
    return poisson1_from_uniform(to_unit_interval(rng()));
}

std::uint32_t replicate_weight(std::string_view unit_id, std::uint64_t b) noexcept {
    return replicate_weight(fingerprint(unit_id), b);
}

std::vector<std::uint32_t> replicate_weights(std::string_view unit_id, std::size_t B) {
    if (B == 0) throw std::invalid_argument("replicate_weights: B must be at least 1");
    const Fingerprint64 h = fingerprint(unit_id);
    std::vector<std::uint32_t> out(B);
    for (std::size_t b = 0; b < B; ++b) out[b] = replicate_weight(h, b);
    return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept {
    return mix13(master + fingerprint(label).value);
}

}  // namespace clickcube
