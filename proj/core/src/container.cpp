#include "cortenc/container.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

#include "cortenc/errors.hpp"

namespace cortenc {

using nlohmann::json;

const char* dtype_name(Dtype d) {
  switch (d) {
    case Dtype::f32: return "f32";
    case Dtype::f64: return "f64";
    case Dtype::i64: return "i64";
  }
  throw IoError("dtype_name: unhandled dtype");
}

Dtype dtype_from_name(const std::string& name) {
  if (name == "f32") return Dtype::f32;
  if (name == "f64") return Dtype::f64;
  if (name == "i64") return Dtype::i64;
  throw IoError("tensor container: unknown dtype '" + name + "'");
}

size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::i64: return 8;
  }
  throw IoError("dtype_size: unhandled dtype");
}

namespace {

TensorInfo parse_header(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line))
    throw IoError("tensor container: missing header line in " + path.string());
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError("tensor container: bad header in " + path.string() + ": " + e.what());
  }
  if (!h.contains("dtype") || !h.contains("shape") || !h.contains("byte_order"))
    throw IoError("tensor container: header missing dtype/shape/byte_order in " + path.string());
  if (h.at("byte_order").get<std::string>() != "little")
    throw IoError("tensor container: unsupported byte order in " + path.string());
  TensorInfo info;
  info.dtype = dtype_from_name(h.at("dtype").get<std::string>());
  for (const auto& d : h.at("shape")) {
    const int64_t v = d.get<int64_t>();
    if (v < 0) throw IoError("tensor container: negative dimension in " + path.string());
    info.shape.push_back(v);
  }
  return info;
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
  json h;
  h["dtype"] = dtype_name(dtype);
  h["shape"] = t.shape();
  h["byte_order"] = "little";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << h.dump() << "\n";

  const int64_t n = t.size();
  const double* src = t.data();
  switch (dtype) {
    case Dtype::f64:
      out.write(reinterpret_cast<const char*>(src), n * 8);
      break;
    case Dtype::f32: {
      std::vector<float> buf(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = static_cast<float>(src[i]);
      out.write(reinterpret_cast<const char*>(buf.data()), n * 4);
      break;
    }
    case Dtype::i64: {
      std::vector<int64_t> buf(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = static_cast<int64_t>(src[i]);
      out.write(reinterpret_cast<const char*>(buf.data()), n * 8);
      break;
    }
  }
  if (!out) throw IoError("short write: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  const TensorInfo info = parse_header(in, path);
  const int64_t n = Tensor::count(info.shape);
  const size_t bytes = static_cast<size_t>(n) * dtype_size(info.dtype);

  std::vector<char> raw(bytes);
  in.read(raw.data(), static_cast<std::streamsize>(bytes));
  if (in.gcount() != static_cast<std::streamsize>(bytes))
    throw IoError("tensor container: truncated payload in " + path.string());
  char probe;
  if (in.read(&probe, 1))
    throw IoError("tensor container: trailing bytes in " + path.string());

  Tensor t(info.shape);
  double* dst = t.data();
  switch (info.dtype) {
    case Dtype::f64:
      std::memcpy(dst, raw.data(), bytes);
      break;
    case Dtype::f32: {
      const float* src = reinterpret_cast<const float*>(raw.data());
      for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<double>(src[i]);
      break;
    }
    case Dtype::i64: {
      const int64_t* src = reinterpret_cast<const int64_t*>(raw.data());
      for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<double>(src[i]);
      break;
    }
  }
  return t;
}

TensorInfo peek_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return parse_header(in, path);
}

}  // namespace cortenc
