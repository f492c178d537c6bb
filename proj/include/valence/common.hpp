#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace valence {

/// Input data violates a documented contract (bad value, wrong shape, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A file could not be parsed (syntax error, wrong layout).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Training diverged or hit a non-finite value.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic 64-bit generator (splitmix64). All randomness in the library
// flows through this type; the std <random> distributions are
// implementation-defined and would break the byte-identical-output contract.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
  uint64_t next_index(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  /// Uniform in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

/// Mixes a stream id into a seed so derived generators are independent.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  Rng rng(seed ^ (0xD1B54A32D192ED03ull * (stream + 1)));
  return rng.next_u64();
}

// Row-major dense matrix. Small and unclever on purpose: the networks here
// are desk-scale and determinism matters more than throughput.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return data.size(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

/// out = M x
inline void matvec(const Matrix& m, const std::vector<double>& x, std::vector<double>& out) {
  out.assign(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    const double* row = m.data.data() + static_cast<size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

/// out += M^T y
inline void matvec_transpose_add(const Matrix& m, const std::vector<double>& y, std::vector<double>& out) {
  for (int r = 0; r < m.rows; ++r) {
    const double yr = y[r];
    const double* row = m.data.data() + static_cast<size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) out[c] += row[c] * yr;
  }
}

/// M += a b^T
inline void outer_add(Matrix& m, const std::vector<double>& a, const std::vector<double>& b) {
  for (int r = 0; r < m.rows; ++r) {
    const double ar = a[r];
    double* row = m.data.data() + static_cast<size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) row[c] += ar * b[c];
  }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline void ensure_finite(double v, const std::string& context) {
  if (!std::isfinite(v)) throw ValidationError("non-finite value in " + context);
}

}  // namespace valence
