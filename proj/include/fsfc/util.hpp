#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>

namespace fsfc {

// log(1 + exp(x)) without overflow for large |x|.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// 1 / (1 + exp(-x)), stable on both tails.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// SplitMix64 step; used to derive independent child seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Round-trip-safe decimal rendering of a double (17 significant digits).
std::string format_double(double value);

// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Effective worker count: FSFC_THREADS env var, then `configured`, then
// hardware concurrency. Always at least 1.
int resolve_threads(int configured);

// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
// processed exactly once; exceptions are rethrown on the calling thread.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace fsfc
