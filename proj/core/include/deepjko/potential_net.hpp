#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "deepjko/tensor.hpp"

namespace deepjko {

enum class InitMode {
  UnitNormal,    // every entry ~ N(0, 1)
  ScaledNormal,  // N(0, 1) / sqrt(fan-in)
  Zero,
};

// Scalar potential φ_θ(τ, x) as a residual network on s = (x, τ) ∈ R^{d+1}:
//
//   u₁      = σ(W₀ s + b₀)
//   u_{l+1} = u_l + σ(W_l u_l + b_l),   l = 1..L-1
//   φ       = wᵀ u_L
//
// The spatial coordinates occupy the first d columns of W₀ and time the
// last, so the spatial gradient is the leading d entries of ∇_s φ and the
// spatial Hessian the leading d×d block.
struct ResNetPotential {
  std::size_t dim = 0;     // d
  std::size_t width = 0;   // m
  std::size_t layers = 0;  // L ≥ 2

  ad::Tensor W0;              // m × (d+1)
  ad::Tensor b0;              // m × 1
  std::vector<ad::Tensor> W;  // L-1 entries, m × m
  std::vector<ad::Tensor> b;  // L-1 entries, m × 1
  ad::Tensor w;               // m × 1

  static ResNetPotential zeros(std::size_t dim, std::size_t width, std::size_t layers);
  static ResNetPotential random(std::size_t dim, std::size_t width, std::size_t layers,
                                InitMode mode, std::mt19937_64& rng);

  // Parameter tensors in id order: W0, b0, W1, b1, ..., W_{L-1}, b_{L-1}, w.
  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> parameters() const;
  std::size_t parameter_count() const noexcept { return 2 * layers + 1; }
  std::size_t scalar_count() const;

  void validate() const;
};

bool operator==(const ResNetPotential& a, const ResNetPotential& b);

// Divides the spatial columns of W₀ by `scale` and shifts b₀ so that an input
// at `mean` produces the pre-activations the origin produced before. Used to
// start training on data far from the origin without saturating σ.
void fit_inputs(ResNetPotential& net, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale);

double forward(const ResNetPotential& net, double tau, std::span<const double> x);
Eigen::VectorXd input_gradient(const ResNetPotential& net, double tau, std::span<const double> x);
Eigen::MatrixXd input_hessian(const ResNetPotential& net, double tau, std::span<const double> x);
Eigen::VectorXd velocity(const ResNetPotential& net, double tau, std::span<const double> x);
double divergence(const ResNetPotential& net, double tau, std::span<const double> x);

// Checkpoint layout (little-endian):
//   8 bytes   magic "DJKONET\0"
//   u32       format version (currently 1)
//   u32 × 3   L, m, d
//   f64 ...   parameters in id order, each tensor row-major
void write_checkpoint(const ResNetPotential& net, std::ostream& out);
ResNetPotential read_checkpoint(std::istream& in);
void save_checkpoint(const ResNetPotential& net, const std::filesystem::path& path);
ResNetPotential load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace deepjko
