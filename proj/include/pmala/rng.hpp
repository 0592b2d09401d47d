#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pmala {

/// Engine used everywhere in the library. Streams are never seeded from
/// entropy; every stream is derived from an explicit master seed.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive an independent substream seed from a master seed and a tuple of
/// identifiers (cell index, replicate, chain, ...). Order of ids matters.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = splitmix64(master);
  for (auto id : ids) h = splitmix64(h ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master,
                    std::initializer_list<std::uint64_t> ids = {}) {
  return Rng(derive_seed(master, ids));
}

}  // namespace pmala
