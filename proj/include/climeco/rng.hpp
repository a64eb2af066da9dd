#pragma once

#include <cstdint>
#include <random>

namespace climeco {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seed for substream `index` of a master seed. Two splitmix64 rounds over the
/// mixed pair; distinct indices give effectively independent streams, and the
/// mapping is part of the documented reproducibility contract.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master + 0x9E3779B97F4A7C15ull * (index + 1);
    splitmix64(s);
    return splitmix64(s);
}

inline std::mt19937_64 seeded_stream(std::uint64_t master, std::uint64_t index) {
    return std::mt19937_64(stream_seed(master, index));
}

} // namespace climeco
