#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ulfe {

using index_t = std::int64_t;
using Shape = std::vector<index_t>;

/// Pipeline scalar. Training and inference run in single precision; tests
/// that need more digits instantiate the templates with double directly.
using real_t = float;

inline index_t shape_numel(const Shape& s) {
  index_t n = 1;
  for (index_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

/// 64-byte-aligned storage. Eigen's vectorized kernels peel loops up to a
/// runtime alignment boundary, so buffers at arbitrary heap offsets make
/// reductions depend on the allocator's mood; pinning the alignment makes
/// every run bitwise reproducible.
template <typename T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAlloc() = default;
  template <typename U>
  AlignedAlloc(const AlignedAlloc<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{alignment}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{alignment}); }

  template <typename U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
};

template <typename S>
using AlignedVec = std::vector<S, AlignedAlloc<S>>;

/// Dense row-major n-d array. The last axis is fastest-varying.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;
  explicit Tensor(Shape shape, S fill = S(0))
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {
    for (index_t d : shape_)
      if (d < 1) throw std::invalid_argument("Tensor: non-positive dimension in " + shape_str(shape_));
  }
  Tensor(Shape shape, AlignedVec<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<index_t>(data_.size()) != shape_numel(shape_))
      throw std::invalid_argument("Tensor: data size does not match shape " + shape_str(shape_));
  }
  Tensor(Shape shape, const std::vector<S>& data)
      : Tensor(std::move(shape), AlignedVec<S>(data.begin(), data.end())) {}

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  index_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  index_t numel() const { return static_cast<index_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  AlignedVec<S>& vec() { return data_; }
  const AlignedVec<S>& vec() const { return data_; }

  S& operator[](index_t i) { return data_[static_cast<std::size_t>(i)]; }
  S operator[](index_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 3-d / 4-d indexing, row-major
  S& at3(index_t d, index_t h, index_t w) { return data_[static_cast<std::size_t>((d * shape_[1] + h) * shape_[2] + w)]; }
  S at3(index_t d, index_t h, index_t w) const { return data_[static_cast<std::size_t>((d * shape_[1] + h) * shape_[2] + w)]; }
  S& at4(index_t c, index_t d, index_t h, index_t w) {
    return data_[static_cast<std::size_t>(((c * shape_[1] + d) * shape_[2] + h) * shape_[3] + w)];
  }
  S at4(index_t c, index_t d, index_t h, index_t w) const {
    return data_[static_cast<std::size_t>(((c * shape_[1] + d) * shape_[2] + h) * shape_[3] + w)];
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw std::invalid_argument("reshape: " + shape_str(shape_) + " -> " + shape_str(s) + " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }
  void reshape_inplace(Shape s) {
    if (shape_numel(s) != numel())
      throw std::invalid_argument("reshape: " + shape_str(shape_) + " -> " + shape_str(s) + " changes element count");
    shape_ = std::move(s);
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (index_t i = 0; i < numel(); ++i) out[i] = static_cast<T>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

  // Eigen views over the flat buffer
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;
  using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
  using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

  MatMap mat(index_t rows, index_t cols) {
    if (rows * cols != numel()) throw std::invalid_argument("mat view: size mismatch");
    return MatMap(data_.data(), rows, cols);
  }
  ConstMatMap mat(index_t rows, index_t cols) const {
    if (rows * cols != numel()) throw std::invalid_argument("mat view: size mismatch");
    return ConstMatMap(data_.data(), rows, cols);
  }
  ArrMap arr() { return ArrMap(data_.data(), numel()); }
  ConstArrMap arr() const { return ConstArrMap(data_.data(), numel()); }

 private:
  Shape shape_;
  AlignedVec<S> data_;
};

template <typename S>
bool same_shape(const Tensor<S>& a, const Tensor<S>& b) {
  return a.shape() == b.shape();
}

}  // namespace ulfe
