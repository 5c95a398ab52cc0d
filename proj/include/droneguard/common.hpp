// Shared plumbing: error types, versioning, thread caps, hashing and
// little-endian binary I/O used by the model/feature containers.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#ifdef _OPENMP
#include <omp.h>
#endif

namespace droneguard {

inline constexpr const char* kToolVersion = "droneguard 0.1.0";

// Error taxonomy. CLI maps ConfigError -> exit 1, everything else -> exit 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct DecodeError : Error {
  using Error::Error;
};
struct UnsupportedFormatError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct DegenerateInputError : Error {
  using Error::Error;
};
struct InsufficientDataError : Error {
  using Error::Error;
};
struct CoverageError : Error {
  using Error::Error;
};

// Worker-thread cap. DRONEGUARD_THREADS overrides hardware concurrency;
// applies to both Eigen's GEMM pool and our OpenMP loops.
inline int thread_cap() {
  if (const char* env = std::getenv("DRONEGUARD_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline void apply_thread_cap() {
  int n = thread_cap();
  Eigen::setNbThreads(n);
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

// FNV-1a, used for config hashes embedded in output artifacts.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Little-endian primitive I/O. All binary containers in this project are
// little-endian regardless of host order.
namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw DecodeError("unexpected end of stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void write_f64_vec(std::ostream& os, const std::vector<double>& v) {
  write_le<std::uint64_t>(os, v.size());
  for (double x : v) write_le<double>(os, x);
}

inline std::vector<double> read_f64_vec(std::istream& is) {
  auto n = read_le<std::uint64_t>(is);
  std::vector<double> v(n);
  for (auto& x : v) x = read_le<double>(is);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  auto n = read_le<std::uint64_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DecodeError("unexpected end of stream");
  return s;
}

}  // namespace detail

}  // namespace droneguard
