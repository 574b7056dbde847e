#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ltsoups {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent stream seed for a named sub-task. Adding new tags never
// perturbs the streams of existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  return splitmix64(splitmix64(root) ^ fnv1a(tag));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root) + 0x632be59bd9b4e019ULL * (index + 1));
}

}  // namespace ltsoups
