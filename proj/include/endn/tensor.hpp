#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace endn {

// Error taxonomy; the CLI maps these to exit codes (config 2, io 3, numeric 4).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : IoError {
  using IoError::IoError;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct Dims4 {
  int n = 0, c = 0, h = 0, w = 0;

  friend bool operator==(const Dims4&, const Dims4&) = default;

  std::int64_t count() const {
    return std::int64_t(n) * c * h * w;
  }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense rank-4 array, contiguous row-major in (n, c, h, w) order.
// T is float for training/inference and double for gradient checking.
template <typename T>
class Tensor4 {
 public:
  Tensor4() = default;

  explicit Tensor4(Dims4 d) : dims_(d), data_(check_dims(d), T(0)) {}

  Tensor4(Dims4 d, std::vector<T> data) : dims_(d), data_(std::move(data)) {
    if (std::int64_t(data_.size()) != check_dims(d))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + d.str());
  }

  Tensor4(int n, int c, int h, int w) : Tensor4(Dims4{n, c, h, w}) {}

  static Tensor4 full(Dims4 d, T v) {
    Tensor4 t(d);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  // Scalar tensor (1,1,1,1), used for loss values.
  static Tensor4 scalar(T v) {
    Tensor4 t(Dims4{1, 1, 1, 1});
    t.data_[0] = v;
    return t;
  }

  const Dims4& dims() const { return dims_; }
  int n() const { return dims_.n; }
  int c() const { return dims_.c; }
  int h() const { return dims_.h; }
  int w() const { return dims_.w; }
  std::int64_t size() const { return std::int64_t(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return {data_.data(), data_.size()}; }
  std::span<const T> span() const { return {data_.data(), data_.size()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int y, int x) {
    return data_[index(n, c, y, x)];
  }
  const T& at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  std::size_t index(int n, int c, int y, int x) const {
    return ((std::size_t(n) * dims_.c + c) * dims_.h + y) * dims_.w + x;
  }

  // Pointer to the start of one (n, c) spatial plane.
  T* plane(int n, int c) {
    return data_.data() + (std::size_t(n) * dims_.c + c) * dims_.h * dims_.w;
  }
  const T* plane(int n, int c) const {
    return data_.data() + (std::size_t(n) * dims_.c + c) * dims_.h * dims_.w;
  }

  bool same_dims(const Tensor4& o) const { return dims_ == o.dims_; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out(dims_);
    for (std::int64_t i = 0; i < size(); ++i) out[i] = U(data_[i]);
    return out;
  }

 private:
  static std::int64_t check_dims(Dims4 d) {
    if (d.n < 1 || d.c < 1 || d.h < 1 || d.w < 1)
      throw ShapeError("all tensor dims must be >= 1, got " + d.str());
    return d.count();
  }

  Dims4 dims_;
  std::vector<T> data_;
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

inline void require_same_dims(const Dims4& a, const Dims4& b, const char* what) {
  if (!(a == b))
    throw ShapeError(std::string(what) + ": dims mismatch " + a.str() + " vs " + b.str());
}

}  // namespace endn
