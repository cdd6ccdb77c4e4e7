#pragma once

#include <cstdint>

namespace deskbert {

// splitmix64 finalizer; combines a base seed with a stream index so that
// per-document, per-step and per-parameter streams are independent.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace deskbert
