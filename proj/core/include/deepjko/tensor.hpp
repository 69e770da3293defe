#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <new>
#include <type_traits>
#include <utility>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace deepjko::ad {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

// 64-byte aligned storage that leaves new elements uninitialised on resize.
// Alignment is fixed so Eigen's vectorised reductions split the same way on
// every allocation, which keeps repeated runs bit-identical.
template <class T>
struct DefaultInitAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  DefaultInitAllocator() noexcept = default;
  template <class U>
  DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
  template <class U>
  bool operator==(const DefaultInitAllocator<U>&) const noexcept { return true; }
};
using Buffer = std::vector<double, DefaultInitAllocator<double>>;

// Dense row-major tensor of doubles. Everything in this project is rank 1
// or 2, but the shape is kept general so checkpoints can describe it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);
  Tensor(std::size_t rows, std::size_t cols);
  Tensor(std::size_t rows, std::size_t cols, double fill);

  // Nested-list literal, one inner list per row.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor column(std::span<const double> values);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);
  static Tensor zeros_like(const Tensor& other);
  // Contents unspecified; for outputs that are overwritten in full.
  static Tensor uninitialized(std::size_t rows, std::size_t cols);
  static Tensor uninitialized_like(const Tensor& other);
  static Tensor from_eigen(const Eigen::Ref<const RowMajorMatrix>& m);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  MatrixMap as_matrix();
  ConstMatrixMap as_matrix() const;

  // Value of a 1x1 tensor.
  double item() const;

  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  Buffer data_;
};

// Throws Error{NonFinite} naming `where` if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* where);

// Value-level kernels. The tape records these same functions, so a taped
// forward value is bit-identical to calling them directly.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // aᵀ b
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_col(const Tensor& a, const Tensor& col);     // a + col·1ᵀ
Tensor scale_rows(const Tensor& a, const Tensor& col);  // diag(col)·a
Tensor col_sum(const Tensor& a);                        // 1×cols
Tensor row_sum(const Tensor& a);                        // rows×1
Tensor sum(const Tensor& a);                            // 1×1
Tensor dot(const Tensor& a, const Tensor& b);           // 1×1
Tensor trace(const Tensor& a);                          // 1×1
Tensor columns(const Tensor& a, std::size_t first, std::size_t count);

}  // namespace deepjko::ad
