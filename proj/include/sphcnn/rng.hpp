#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sphcnn {

// All randomness in the project flows from one user seed through named
// streams (init, shuffle, dropout, synth, ...). Streams are independent:
// adding a consumer to one stream does not perturb the others.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view name) {
    // FNV-1a over the stream name, mixed with the seed via splitmix64.
    std::uint64_t h = 1469598103934665603ull;
    for (char c : name) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ull;
    }
    std::uint64_t s = seed + 0x9e3779b97f4a7c15ull * (h | 1ull);
    s ^= s >> 30;
    s *= 0xbf58476d1ce4e5b9ull;
    s ^= s >> 27;
    s *= 0x94d049bb133111ebull;
    s ^= s >> 31;
    return std::mt19937_64(s);
}

}  // namespace sphcnn
