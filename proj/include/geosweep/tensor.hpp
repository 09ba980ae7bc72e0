#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace geosweep {

// Dense row-major containers for image-shaped data. Last index is the
// fastest-varying one, so (..., y, x) iterates images in scanline order.

template <typename T>
class Array2D {
 public:
  Array2D() = default;
  Array2D(int rows, int cols, T value = T{})
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, value) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  T& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  const T& operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  void fill(T value) { data_.assign(data_.size(), value); }

  bool same_shape(const Array2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
class Array3D {
 public:
  Array3D() = default;
  Array3D(int d0, int d1, int d2, T value = T{})
      : d0_(d0), d1_(d1), d2_(d2),
        data_(static_cast<size_t>(d0) * d1 * d2, value) {}

  int dim0() const { return d0_; }
  int dim1() const { return d1_; }
  int dim2() const { return d2_; }
  size_t size() const { return data_.size(); }

  T& operator()(int i, int j, int k) {
    assert(i >= 0 && i < d0_ && j >= 0 && j < d1_ && k >= 0 && k < d2_);
    return data_[(static_cast<size_t>(i) * d1_ + j) * d2_ + k];
  }
  const T& operator()(int i, int j, int k) const {
    assert(i >= 0 && i < d0_ && j >= 0 && j < d1_ && k >= 0 && k < d2_);
    return data_[(static_cast<size_t>(i) * d1_ + j) * d2_ + k];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  void fill(T value) { data_.assign(data_.size(), value); }

  bool same_shape(const Array3D& o) const {
    return d0_ == o.d0_ && d1_ == o.d1_ && d2_ == o.d2_;
  }

 private:
  int d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<T> data_;
};

template <typename T>
class Array4D {
 public:
  Array4D() = default;
  Array4D(int d0, int d1, int d2, int d3, T value = T{})
      : d0_(d0), d1_(d1), d2_(d2), d3_(d3),
        data_(static_cast<size_t>(d0) * d1 * d2 * d3, value) {}

  int dim0() const { return d0_; }
  int dim1() const { return d1_; }
  int dim2() const { return d2_; }
  int dim3() const { return d3_; }
  size_t size() const { return data_.size(); }

  T& operator()(int i, int j, int k, int l) {
    assert(i >= 0 && i < d0_ && j >= 0 && j < d1_ && k >= 0 && k < d2_ && l >= 0 && l < d3_);
    return data_[((static_cast<size_t>(i) * d1_ + j) * d2_ + k) * d3_ + l];
  }
  const T& operator()(int i, int j, int k, int l) const {
    assert(i >= 0 && i < d0_ && j >= 0 && j < d1_ && k >= 0 && k < d2_ && l >= 0 && l < d3_);
    return data_[((static_cast<size_t>(i) * d1_ + j) * d2_ + k) * d3_ + l];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  void fill(T value) { data_.assign(data_.size(), value); }

  bool same_shape(const Array4D& o) const {
    return d0_ == o.d0_ && d1_ == o.d1_ && d2_ == o.d2_ && d3_ == o.d3_;
  }

 private:
  int d0_ = 0, d1_ = 0, d2_ = 0, d3_ = 0;
  std::vector<T> data_;
};

}  // namespace geosweep
