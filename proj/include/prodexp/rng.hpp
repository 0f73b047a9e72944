#pragma once

#include <cstdint>
#include <random>

namespace prodexp {

// SplitMix64 finalizer; used to derive independent per-task seeds from a
// master seed so results do not depend on how tasks map to threads.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ index) ^ (stream * 0xd1b54a32d192ed03ULL));
}

using Rng = std::mt19937_64;

}  // namespace prodexp
