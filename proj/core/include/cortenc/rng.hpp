#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cortenc/tensor.hpp"

namespace cortenc {

// Thin wrapper around mt19937_64 so every random draw in the project goes
// through one seeded, documented path. Normal draws use our own
// Box-Muller so the byte stream depends only on the seed, not on the
// standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  int64_t below(int64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  void fill_normal(Tensor& t, double mean = 0.0, double stddev = 1.0) {
    double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = normal(mean, stddev);
  }

  void fill_uniform(Tensor& t, double lo, double hi) {
    double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = uniform(lo, hi);
  }

  // Fisher-Yates shuffle of indices 0..n-1.
  std::vector<int64_t> permutation(int64_t n) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int64_t i = n - 1; i > 0; --i) {
      const int64_t j = below(i + 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    return idx;
  }

  // k distinct values from 0..n-1, in draw order.
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

  // Derive an independent stream, e.g. per subject or per worker.
  Rng fork(uint64_t salt) {
    uint64_t s = gen_();
    s ^= salt + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    return Rng(s);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cortenc
