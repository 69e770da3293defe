#include "deepjko/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "deepjko/error.hpp"

namespace deepjko::ad {
namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < t.shape().size(); ++i) os << (i ? "x" : "") << t.shape()[i];
  os << ']';
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(ErrorCode::ShapeMismatch,
              std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor checked(Tensor t, const char* op) {
  require_finite(t, op);
  return t;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != product(shape_)) {
    throw Error(ErrorCode::ShapeMismatch, "tensor data length does not match shape " + shape_str(*this));
  }
}

Tensor::Tensor(std::size_t rows, std::size_t cols) : Tensor(std::vector<std::size_t>{rows, cols}) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) : Tensor(rows, cols) {
  std::fill(data_.begin(), data_.end(), fill);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorCode::ShapeMismatch, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape()); }

Tensor Tensor::uninitialized(std::size_t rows, std::size_t cols) {
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_.resize(rows * cols);
  return t;
}

Tensor Tensor::uninitialized_like(const Tensor& other) {
  Tensor t;
  t.shape_ = other.shape_;
  t.data_.resize(other.data_.size());
  return t;
}

Tensor Tensor::from_eigen(const Eigen::Ref<const RowMajorMatrix>& m) {
  Tensor t(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  t.as_matrix() = m;
  return t;
}

std::size_t Tensor::rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }

std::size_t Tensor::cols() const noexcept {
  if (shape_.size() < 2) return 1;
  return data_.size() / shape_[0];
}

MatrixMap Tensor::as_matrix() {
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::as_matrix() const {
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

double Tensor::item() const {
  if (data_.size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on non-scalar tensor " + shape_str(*this));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  // Exponent all ones means NaN or ±inf. Integer reduction so it vectorises.
  constexpr std::uint64_t exp_mask = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double v : data_) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & exp_mask) == exp_mask);
  return bad == 0;
}

void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw Error(ErrorCode::NonFinite, std::string(where) + ": non-finite value");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Tensor out = Tensor::uninitialized(a.rows(), b.cols());
  out.as_matrix().noalias() = a.as_matrix() * b.as_matrix();
  return checked(std::move(out), "matmul");
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  Tensor out = Tensor::uninitialized(a.cols(), b.cols());
  out.as_matrix().noalias() = a.as_matrix().transpose() * b.as_matrix();
  return checked(std::move(out), "matmul_tn");
}

Tensor transpose(const Tensor& a) {
  Tensor out = Tensor::uninitialized(a.cols(), a.rows());
  out.as_matrix() = a.as_matrix().transpose();
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
  Tensor out = Tensor::uninitialized(a.rows(), a.cols());
  out.as_matrix() = a.as_matrix() + b.as_matrix();
  return checked(std::move(out), "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  Tensor out = Tensor::uninitialized(a.rows(), a.cols());
  out.as_matrix() = a.as_matrix() - b.as_matrix();
  return checked(std::move(out), "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  Tensor out = Tensor::uninitialized(a.rows(), a.cols());
  out.as_matrix() = a.as_matrix().cwiseProduct(b.as_matrix());
  return checked(std::move(out), "mul");
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::uninitialized(a.rows(), a.cols());
  out.as_matrix() = a.as_matrix() * s;
  return checked(std::move(out), "scale");
}

Tensor add_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) shape_error("add_col", a, col);
  Tensor out = Tensor::uninitialized(a.rows(), a.cols());
  out.as_matrix() = a.as_matrix().colwise() + col.as_matrix().col(0);
  return checked(std::move(out), "add_col");
}

Tensor scale_rows(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) shape_error("scale_rows", a, col);
  Tensor out = Tensor::uninitialized(a.rows(), a.cols());
  out.as_matrix() = col.as_matrix().col(0).asDiagonal() * a.as_matrix();
  return checked(std::move(out), "scale_rows");
}

Tensor col_sum(const Tensor& a) {
  Tensor out = Tensor::uninitialized(1, a.cols());
  out.as_matrix() = a.as_matrix().colwise().sum();
  return checked(std::move(out), "col_sum");
}

Tensor row_sum(const Tensor& a) {
  Tensor out = Tensor::uninitialized(a.rows(), 1);
  out.as_matrix() = a.as_matrix().rowwise().sum();
  return checked(std::move(out), "row_sum");
}

Tensor sum(const Tensor& a) { return checked(Tensor::scalar(a.as_matrix().sum()), "sum"); }

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_error("dot", a, b);
  return checked(Tensor::scalar(a.as_matrix().cwiseProduct(b.as_matrix()).sum()), "dot");
}

Tensor trace(const Tensor& a) {
  if (a.rows() != a.cols()) shape_error("trace", a, a);
  return checked(Tensor::scalar(a.as_matrix().trace()), "trace");
}

Tensor columns(const Tensor& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "columns: slice out of range for " + shape_str(a));
  }
  Tensor out = Tensor::uninitialized(a.rows(), count);
  out.as_matrix() = a.as_matrix().middleCols(static_cast<Eigen::Index>(first),
                                             static_cast<Eigen::Index>(count));
  return out;
}

}  // namespace deepjko::ad
