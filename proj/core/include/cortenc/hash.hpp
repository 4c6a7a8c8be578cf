#pragma once

#include <cstdint>
#include <string>

#include "cortenc/tensor.hpp"

namespace cortenc {

// FNV-1a over arbitrary bytes. Used for config hashes and parameter
// fingerprints in manifests; not a cryptographic primitive.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Fingerprints the exact bit patterns, so "unchanged" means byte-identical.
inline uint64_t tensor_bits_hash(const Tensor& t, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(t.data(), static_cast<size_t>(t.size()) * sizeof(double), h);
}

std::string hash_hex(uint64_t h);

}  // namespace cortenc
