#pragma once

#include <array>
#include <cstdint>

namespace mzi {

/// Philox4x32-10 counter-based generator. Stateless: every (counter, key)
/// pair maps to four independent 32-bit words, so sampling run k only needs
/// (seed, k) and any partition of the run range reproduces the serial stream.
struct Philox4x32 {
    static std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const uint64_t p0 = uint64_t{0xD2511F53u} * ctr[0];
            const uint64_t p1 = uint64_t{0xCD9E8D57u} * ctr[2];
            ctr = {static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<uint32_t>(p1),
                   static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<uint32_t>(p0)};
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }
};

/// Deterministic per-run uniform variates keyed by (seed, run index).
class CounterRng {
public:
    explicit CounterRng(uint64_t seed) : seed_(seed) {}

    uint64_t bits64(uint64_t counter, uint32_t substream = 0) const {
        const auto out = Philox4x32::block(
            {static_cast<uint32_t>(counter), static_cast<uint32_t>(counter >> 32), substream, 0},
            {static_cast<uint32_t>(seed_), static_cast<uint32_t>(seed_ >> 32)});
        return (uint64_t{out[0]} << 32) | out[1];
    }

    /// Uniform double in [0, 1), 53 random bits.
    double uniform(uint64_t counter, uint32_t substream = 0) const {
        return static_cast<double>(bits64(counter, substream) >> 11) * 0x1.0p-53;
    }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
};

}  // namespace mzi
