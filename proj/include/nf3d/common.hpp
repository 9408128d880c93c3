#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nf3d {

using Vec3 = Eigen::Vector3d;

/// What a field encodes. Values match the bitstream's field_kind byte.
enum class FieldKind : std::uint8_t { Udf = 0, Sdf = 1, Attr = 2 };

inline const char* to_string(FieldKind k) {
  switch (k) {
    case FieldKind::Udf: return "udf";
    case FieldKind::Sdf: return "sdf";
    case FieldKind::Attr: return "attr";
  }
  return "?";
}

/// Error categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  Parse = 1,
  Config = 2,
  Divergence = 3,
  Corrupt = 4,
  EmptySurface = 5,
  AllFailed = 6,
  Degenerate = 7,
  Unsupported = 8,
  Precondition = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// splitmix64 finalizer; used to derive independent stream seeds
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Worker count: explicit value if > 0, else NF3D_THREADS, else hardware concurrency.
inline unsigned resolve_threads(int requested = 0) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char* env = std::getenv("NF3D_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

inline unsigned& default_threads() {
  static unsigned n = resolve_threads();
  return n;
}

/// Runs fn(begin, end) over [0, n) split into fixed-size chunks. Chunk boundaries
/// do not depend on the worker count, so per-chunk results are reproducible.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, Fn&& fn, unsigned threads = 0) {
  if (n == 0) return;
  if (threads == 0) threads = default_threads();
  const std::size_t num_chunks = (n + chunk - 1) / chunk;
  if (threads <= 1 || num_chunks <= 1) {
    for (std::size_t c = 0; c < num_chunks; ++c) fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, num_chunks);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < num_chunks; c += workers) fn(c * chunk, std::min(n, (c + 1) * chunk));
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace nf3d
