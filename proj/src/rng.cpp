#include "eepo/rng.hpp"

namespace eepo {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream RngStream::child(std::uint64_t seed, StreamDomain domain,
                           std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(domain)));
  for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return RngStream(h);
}

}  // namespace eepo
