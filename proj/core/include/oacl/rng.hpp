#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace oacl {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Named sub-seed: every random stream in a run is derived from the config
/// seed through one of these, never from wall-clock entropy.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(seed ^ h) + index);
}

inline Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
    return Rng(derive_seed(seed, name, index));
}

} // namespace oacl
