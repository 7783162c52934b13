#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace golde {

using VecD = std::vector<double>;

// ---------------------------------------------------------------------------
// Errors. Library code throws; the CLI maps exception types to exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operands of incompatible length/shape.
struct DimensionError : Error {
  using Error::Error;
};

/// Reflector with |<u,u>_w| below the isotropy threshold used directly.
struct DegenerateReflectorError : Error {
  using Error::Error;
};

/// A documented precondition was violated (non-orthogonal input,
/// off-manifold point, mismatched curvature, incompatible checkpoint).
struct ContractError : Error {
  using Error::Error;
};

/// Weighting vector outside the supported signature class.
struct UnsupportedSignatureError : Error {
  using Error::Error;
};

/// Malformed input file; message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

/// Invalid run configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Non-finite value produced during numeric computation.
struct NumericError : Error {
  using Error::Error;
};

/// Requested diagnostics cannot be materialized.
struct DiagnosticsError : Error {
  using Error::Error;
};

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch (" +
                         std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// ---------------------------------------------------------------------------
// Deterministic random numbers. mt19937_64 is fully specified by the
// standard; distributions are hand-rolled because the std ones are
// implementation-defined and would break cross-platform reproducibility.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  /// Independent stream for (seed, a, b), e.g. (run seed, step, positive index).
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return Rng(splitmix64(seed ^ splitmix64(a ^ splitmix64(b))));
  }

  std::uint64_t bits() { return eng_(); }

  /// Uniform in [0,1).
  double uniform() { return double(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two engine draws.
  double normal() {
    const double u1 = double((bits() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Uniform integer in [0,n).
  std::int64_t below(std::int64_t n) {
    return std::int64_t((static_cast<unsigned __int128>(bits()) *
                         static_cast<unsigned __int128>(n)) >> 64);
  }

 private:
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Dense row-major matrix. Only used off the hot path (oracles, diagnostics,
// materialized relation matrices).
// ---------------------------------------------------------------------------

struct Mat {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  VecD a;

  Mat() = default;
  Mat(std::int64_t r, std::int64_t c) : rows(r), cols(c), a(std::size_t(r * c), 0.0) {}

  double& operator()(std::int64_t i, std::int64_t j) { return a[std::size_t(i * cols + j)]; }
  double operator()(std::int64_t i, std::int64_t j) const { return a[std::size_t(i * cols + j)]; }

  static Mat identity(std::int64_t n) {
    Mat m(n, n);
    for (std::int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Mat matmul(const Mat& x, const Mat& y) {
  require_same_size(std::size_t(x.cols), std::size_t(y.rows), "matmul");
  Mat out(x.rows, y.cols);
  for (std::int64_t i = 0; i < x.rows; ++i) {
    for (std::int64_t k = 0; k < x.cols; ++k) {
      const double v = x(i, k);
      if (v == 0.0) continue;
      for (std::int64_t j = 0; j < y.cols; ++j) out(i, j) += v * y(k, j);
    }
  }
  return out;
}

inline Mat transpose(const Mat& x) {
  Mat out(x.cols, x.rows);
  for (std::int64_t i = 0; i < x.rows; ++i)
    for (std::int64_t j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
  return out;
}

inline VecD matvec(const Mat& m, std::span<const double> x) {
  require_same_size(std::size_t(m.cols), x.size(), "matvec");
  VecD out(std::size_t(m.rows), 0.0);
  for (std::int64_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < m.cols; ++j) s += m(i, j) * x[std::size_t(j)];
    out[std::size_t(i)] = s;
  }
  return out;
}

inline double max_abs(const Mat& m) {
  double v = 0.0;
  for (double x : m.a) v = std::max(v, std::abs(x));
  return v;
}

inline double max_abs_diff(const Mat& x, const Mat& y) {
  require_same_size(x.a.size(), y.a.size(), "max_abs_diff");
  double v = 0.0;
  for (std::size_t i = 0; i < x.a.size(); ++i) v = std::max(v, std::abs(x.a[i] - y.a[i]));
  return v;
}

// ---------------------------------------------------------------------------
// Chunked parallel runner. Work is split into fixed-size chunks claimed via
// an atomic counter; callers write results into per-chunk slots and reduce
// in chunk order, which makes results independent of the worker count. The
// first exception thrown by any worker is rethrown on the calling thread.
// ---------------------------------------------------------------------------

template <class F>
void parallel_chunks(std::int64_t n, std::int64_t chunk_size, int threads, F&& fn) {
  if (n <= 0) return;
  const std::int64_t num_chunks = (n + chunk_size - 1) / chunk_size;
  auto run_chunk = [&](std::int64_t c) {
    const std::int64_t begin = c * chunk_size;
    fn(c, begin, std::min(begin + chunk_size, n));
  };
  if (threads <= 1 || num_chunks <= 1) {
    for (std::int64_t c = 0; c < num_chunks; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const std::int64_t c = next.fetch_add(1);
      if (c >= num_chunks) return;
      try {
        run_chunk(c);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int spawn = int(std::min<std::int64_t>(threads, num_chunks)) - 1;
  pool.reserve(std::size_t(spawn));
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline int default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

// ---------------------------------------------------------------------------
// Little-endian scalar encoding for checkpoints, host-endianness agnostic.
// ---------------------------------------------------------------------------

inline void store_u64_le(std::uint64_t v, unsigned char* out) {
  for (int i = 0; i < 8; ++i) out[i] = (unsigned char)(v >> (8 * i));
}

inline std::uint64_t load_u64_le(const unsigned char* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(in[i]) << (8 * i);
  return v;
}

inline void store_f64_le(double x, unsigned char* out) {
  store_u64_le(std::bit_cast<std::uint64_t>(x), out);
}

inline double load_f64_le(const unsigned char* in) {
  return std::bit_cast<double>(load_u64_le(in));
}

inline void store_f32_le(float x, unsigned char* out) {
  const auto v = std::bit_cast<std::uint32_t>(x);
  for (int i = 0; i < 4; ++i) out[i] = (unsigned char)(v >> (8 * i));
}

inline float load_f32_le(const unsigned char* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[i]) << (8 * i);
  return std::bit_cast<float>(v);
}

}  // namespace golde
