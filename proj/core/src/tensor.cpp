#include "cortenc/tensor.hpp"

#include <cmath>
#include <sstream>

namespace cortenc {

bool Tensor::all_finite() const {
  if (!data_) return true;
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

}  // namespace cortenc
