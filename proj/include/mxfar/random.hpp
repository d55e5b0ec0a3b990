#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mxfar {

/// splitmix64 finalizer; good avalanche, used to derive independent stream seeds.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Named substreams so that every random quantity has its own seed.
enum class Stream : std::uint64_t {
    Noise = 1,
    Effects = 2,
    Bootstrap = 3,
    Bands = 4,
    LinkNull = 5,
    Replicate = 6,
};

/// Seed for item `index` of stream `stream`, independent of evaluation order.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                                  std::uint64_t index) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

/// 64-bit FNV-1a of a label, for seeds that follow a subject rather than its position.
[[nodiscard]] constexpr std::uint64_t hash_label(std::string_view label) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

using Rng = std::mt19937_64;

[[nodiscard]] inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return Rng(derive_seed(seed, stream, index));
}

}  // namespace mxfar
