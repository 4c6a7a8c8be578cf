#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cortenc/tensor.hpp"

namespace cortenc {

// Portable tensor container: one UTF-8 JSON header line
// {"dtype":..,"shape":[..],"byte_order":"little"} terminated by LF,
// followed by the raw little-endian payload. Payload length must equal
// product(shape) * dtype size.
enum class Dtype { f32, f64, i64 };

const char* dtype_name(Dtype d);
Dtype dtype_from_name(const std::string& name);
size_t dtype_size(Dtype d);

struct TensorInfo {
  Dtype dtype = Dtype::f64;
  std::vector<int64_t> shape;
};

void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype = Dtype::f64);

// Values widen to double on read; integer payloads are exact below 2^53.
Tensor read_tensor(const std::filesystem::path& path);

TensorInfo peek_tensor(const std::filesystem::path& path);

}  // namespace cortenc
