#include "deepjko/activation.hpp"

#include <cmath>
#include <string>

#include <Eigen/Core>

namespace deepjko {
namespace {

using Array = Eigen::Array<double, Eigen::Dynamic, 1>;
using ConstArrayMap = Eigen::Map<const Array>;
using ArrayMap = Eigen::Map<Array>;

// e = exp(-2|x|) is the only transcendental shared by all three kernels.
Array decay(const ConstArrayMap& x) { return (-2.0 * x.abs()).exp(); }

Array tanh_from(const ConstArrayMap& x, const Array& e) {
  return x.sign() * (1.0 - e) / (1.0 + e);
}

class SigmaKernel final : public ad::UnaryKernel {
 public:
  void apply(std::span<const double> xs, std::span<double> value,
             std::span<double> derivative) const override {
    ConstArrayMap x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Array e = decay(x);
    ArrayMap(value.data(), x.size()) = x.abs() + e.log1p();
    if (!derivative.empty()) ArrayMap(derivative.data(), x.size()) = tanh_from(x, e);
  }
  std::string name() const override { return "sigma"; }
};

class SigmaPrimeKernel final : public ad::UnaryKernel {
 public:
  void apply(std::span<const double> xs, std::span<double> value,
             std::span<double> derivative) const override {
    ConstArrayMap x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Array e = decay(x);
    ArrayMap(value.data(), x.size()) = tanh_from(x, e);
    if (!derivative.empty()) {
      ArrayMap(derivative.data(), x.size()) = 4.0 * e / ((1.0 + e) * (1.0 + e));
    }
  }
  std::string name() const override { return "sigma'"; }
};

class SigmaSecondKernel final : public ad::UnaryKernel {
 public:
  void apply(std::span<const double> xs, std::span<double> value,
             std::span<double> derivative) const override {
    ConstArrayMap x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Array e = decay(x);
    const Array sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
    ArrayMap(value.data(), x.size()) = sech2;
    if (!derivative.empty()) {
      ArrayMap(derivative.data(), x.size()) = -2.0 * tanh_from(x, e) * sech2;
    }
  }
  std::string name() const override { return "sigma''"; }
};

}  // namespace

double sigma(double x) {
  const double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax));
}

double sigma_prime(double x) { return std::tanh(x); }

double sigma_second(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

double sigma_third(double x) {
  const double t = std::tanh(x);
  return -2.0 * t * (1.0 - t * t);
}

std::shared_ptr<const ad::UnaryKernel> sigma_kernel() {
  static const auto k = std::make_shared<SigmaKernel>();
  return k;
}

std::shared_ptr<const ad::UnaryKernel> sigma_prime_kernel() {
  static const auto k = std::make_shared<SigmaPrimeKernel>();
  return k;
}

std::shared_ptr<const ad::UnaryKernel> sigma_second_kernel() {
  static const auto k = std::make_shared<SigmaSecondKernel>();
  return k;
}

}  // namespace deepjko
