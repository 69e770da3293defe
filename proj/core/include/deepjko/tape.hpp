#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "deepjko/tensor.hpp"

namespace deepjko::ad {

using ParamId = std::size_t;
using Gradients = std::map<ParamId, Tensor>;

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

// Elementwise function together with its derivative, evaluated over a whole
// buffer at once so implementations can vectorize.
class UnaryKernel {
 public:
  virtual ~UnaryKernel() = default;
  virtual void apply(std::span<const double> x, std::span<double> value,
                     std::span<double> derivative) const = 0;
  virtual std::string name() const = 0;
};

std::shared_ptr<const UnaryKernel> make_unary(std::string name, std::function<double(double)> f,
                                              std::function<double(double)> df);

// Scalar field R^d -> R with gradient (external potentials).
class ScalarField {
 public:
  virtual ~ScalarField() = default;
  virtual double value(std::span<const double> x) const = 0;
  virtual void gradient(std::span<const double> x, std::span<double> out) const = 0;
};

// Symmetric pair kernel W(x, y) = W(y, x) with its gradient in the first slot.
class PairKernel {
 public:
  virtual ~PairKernel() = default;
  virtual double value(std::span<const double> x, std::span<const double> y) const = 0;
  virtual void gradient_first(std::span<const double> x, std::span<const double> y,
                              std::span<double> out) const = 0;
};

// Per-column evaluation of a field: Z is d×N, result is 1×N.
Tensor apply_field(const Tensor& z, const ScalarField& field);
// r_j = (1/N) Σ_l W(z_j, z_l); Z is d×N, result is 1×N.
Tensor pair_mean(const Tensor& z, const PairKernel& kernel);
// Applies the kernel, returning the value; the derivative is written to `derivative`.
Tensor apply_unary(const Tensor& x, const UnaryKernel& kernel, Tensor* derivative = nullptr);

// Reverse-mode tape over a small fixed set of primitives. Single owner,
// single thread; record a forward pass, then call backward() exactly once.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(ParamId id, const Tensor& value);
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  Var matmul(Var a, Var b);
  Var matmul_tn(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_col(Var a, Var col);
  Var scale_rows(Var a, Var col);
  Var unary(Var a, std::shared_ptr<const UnaryKernel> kernel);
  Var col_sum(Var a);
  Var row_sum(Var a);
  Var sum(Var a);
  Var dot(Var a, Var b);
  Var trace(Var a);
  Var columns(Var a, std::size_t first, std::size_t count);
  Var field(Var z, std::shared_ptr<const ScalarField> f);
  Var pair_mean(Var z, std::shared_ptr<const PairKernel> kernel);

  const Tensor& value(Var v) const;
  std::size_t size() const noexcept;
  bool consumed() const noexcept { return consumed_; }

  // Re-evaluates every node from the leaves and returns the value of `output`.
  Tensor replay(Var output) const;

  // d(output)/d(parameter) for every registered parameter; output must be 1×1.
  Gradients backward(Var output, double seed = 1.0);

 private:
  struct Node;
  Var push(Node node);
  std::vector<Node> nodes_;
  std::map<ParamId, std::size_t> params_;
  bool consumed_ = false;
};

}  // namespace deepjko::ad
