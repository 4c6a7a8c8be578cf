#include "cortenc/rng.hpp"

#include <unordered_set>

#include "cortenc/errors.hpp"

namespace cortenc {

std::vector<int64_t> Rng::sample_without_replacement(int64_t n, int64_t k) {
  if (k > n) throw ConfigError("sample_without_replacement: k > n");
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(k));
  if (k * 3 >= n) {
    auto perm = permutation(n);
    out.assign(perm.begin(), perm.begin() + static_cast<size_t>(k));
    return out;
  }
  std::unordered_set<int64_t> seen;
  while (static_cast<int64_t>(out.size()) < k) {
    const int64_t v = below(n);
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

}  // namespace cortenc
