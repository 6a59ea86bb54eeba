#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "spikeflow/common.hpp"

namespace spikeflow {

// Dense row-major N-d array. Value semantics; copies never alias.
template <typename S>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<size_t> shape, S fill = S(0))
      : shape_(std::move(shape)), data_(count(shape_), fill) {}

  Tensor(std::initializer_list<size_t> shape, S fill = S(0))
      : shape_(shape), data_(count(shape_), fill) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<size_t>& shape() const { return shape_; }
  size_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](size_t i) { return data_[i]; }
  const S& operator[](size_t i) const { return data_[i]; }

  // Unchecked multi-index accessors for the ranks the engine uses.
  S& at(size_t a, size_t b) { return data_[a * shape_[1] + b]; }
  const S& at(size_t a, size_t b) const { return data_[a * shape_[1] + b]; }

  S& at(size_t a, size_t b, size_t c) {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }
  const S& at(size_t a, size_t b, size_t c) const {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }

  S& at(size_t a, size_t b, size_t c, size_t d) {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  const S& at(size_t a, size_t b, size_t c, size_t d) const {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

  void reshape(std::vector<size_t> shape) {
    if (count(shape) != data_.size())
      throw UsageError("reshape: element count mismatch " +
                       shape_string(shape) + " vs " + shape_string(shape_));
    shape_ = std::move(shape);
  }

  S sum() const {
    S acc = S(0);
    for (S v : data_) acc += v;
    return acc;
  }

  S abs_max() const {
    S m = S(0);
    for (S v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    for (S v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return out;
  }

  static std::string shape_string(const std::vector<size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }
  std::string shape_string() const { return shape_string(shape_); }

private:
  static size_t count(const std::vector<size_t>& s) {
    return std::accumulate(s.begin(), s.end(), size_t{1},
                           std::multiplies<size_t>());
  }

  std::vector<size_t> shape_;
  std::vector<S> data_;
};

// A trainable value with an additively accumulated gradient of equal shape.
template <typename S>
struct Parameter {
  Tensor<S> value;
  Tensor<S> grad;

  Parameter() = default;
  explicit Parameter(Tensor<S> v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(S(0)); }
};

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                      const char* what) {
  if (!a.same_shape(b))
    throw UsageError(std::string(what) + ": shape mismatch " +
                     a.shape_string() + " vs " + b.shape_string());
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Dense 2-channel (u, v) flow map in pixels per frame interval, shape [2,H,W].
using FlowField = Tensor<double>;

}  // namespace spikeflow
