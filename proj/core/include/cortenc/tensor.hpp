#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cortenc/errors.hpp"

namespace cortenc {

// Dense row-major double tensor. Copies are shallow (shared storage);
// use clone() for an independent buffer. Rank up to 4 is what the
// models use, but nothing below assumes a cap.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}

  Tensor(std::vector<int64_t> shape, std::vector<double> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (static_cast<int64_t>(data_->size()) != count(shape_))
      throw ShapeError("Tensor: value count does not match shape");
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  const std::vector<int64_t>& shape() const { return shape_; }

  bool defined() const { return static_cast<bool>(data_); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }

  double& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  double& at(int64_t i, int64_t j) { return (*data_)[static_cast<size_t>(i * shape_[1] + j)]; }
  double at(int64_t i, int64_t j) const { return (*data_)[static_cast<size_t>(i * shape_[1] + j)]; }

  double& at(int64_t i, int64_t j, int64_t k) {
    return (*data_)[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at(int64_t i, int64_t j, int64_t k) const {
    return (*data_)[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  double& at(int64_t i, int64_t j, int64_t k, int64_t l) {
    return (*data_)[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  double at(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return (*data_)[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
  }

  // Shares storage; element count must be preserved.
  Tensor reshaped(std::vector<int64_t> shape) const {
    if (count(shape) != size()) throw ShapeError("Tensor::reshaped: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) {
    for (auto& x : *data_) x = v;
  }

  bool all_finite() const;

  std::string shape_str() const;

  static int64_t count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw ShapeError("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int64_t> shape_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace cortenc
