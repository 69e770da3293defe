#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "deepjko/batch_field.hpp"
#include "deepjko/inner_stepper.hpp"
#include "deepjko/potential_net.hpp"
#include "deepjko/tensor.hpp"

namespace deepjko {

struct InnerSchedule {
  std::size_t steps = 1;  // N_τ
  Integrator integrator = Integrator::RK4;

  double dtau() const { return 1.0 / static_cast<double>(steps); }
  void validate() const;
};

// Particles x_j with the density ρ(x_j) they carry and the log-determinant
// of the most recent transport map evaluated along their trajectory.
struct ParticleEnsemble {
  std::size_t step = 0;           // outer JKO index n
  ad::Tensor positions;           // N × d
  std::vector<double> logdets;    // N
  std::vector<double> densities;  // N, strictly positive

  std::size_t size() const noexcept { return positions.rows(); }
  std::size_t dim() const noexcept { return positions.size() ? positions.cols() : 0; }
  void validate() const;
};

ParticleEnsemble make_ensemble(ad::Tensor positions, std::vector<double> densities);

// Anything that can supply ∇_x φ and tr ∇²_x φ on a batch of points (d × N).
class VelocityPotential {
 public:
  virtual ~VelocityPotential() = default;
  virtual std::size_t dim() const = 0;
  virtual FieldEval<ad::Tensor> evaluate(const ad::Tensor& points, double tau) const = 0;
};

class NetworkPotential final : public VelocityPotential {
 public:
  explicit NetworkPotential(const ResNetPotential& net);
  std::size_t dim() const override { return dim_; }
  FieldEval<ad::Tensor> evaluate(const ad::Tensor& points, double tau) const override;

 private:
  std::size_t dim_;
  NetView<ad::Tensor> view_;
};

// φ(x) = ½ xᵀ A x + bᵀ x, frozen in τ. A must be symmetric. Its flow is
// affine, which makes it the reference case for determinant checks.
class QuadraticPotential final : public VelocityPotential {
 public:
  QuadraticPotential(Eigen::MatrixXd a, Eigen::VectorXd b);
  std::size_t dim() const override { return static_cast<std::size_t>(b_.size()); }
  FieldEval<ad::Tensor> evaluate(const ad::Tensor& points, double tau) const override;

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
};

// Single inner steps k → k+1; positions and logdets advance, densities are untouched.
ParticleEnsemble step_euler(const VelocityPotential& phi, std::size_t k, const InnerSchedule& schedule,
                            const ParticleEnsemble& ensemble);
ParticleEnsemble step_rk4(const VelocityPotential& phi, std::size_t k, const InnerSchedule& schedule,
                          const ParticleEnsemble& ensemble);

// Full transport over τ ∈ [0, 1]: logdets restart at 0, then densities are
// pushed forward. The returned ensemble belongs to step + 1.
ParticleEnsemble integrate(const VelocityPotential& phi, const InnerSchedule& schedule,
                           ParticleEnsemble ensemble);
ParticleEnsemble integrate(const ResNetPotential& net, const InnerSchedule& schedule,
                           ParticleEnsemble ensemble);

// ρ(z_j) = ρⁿ(x_j) / exp(l_j), exact and unclamped.
std::vector<double> push_density(const ParticleEnsemble& ensemble);

// Pushes fresh samples through φ⁰..φ^{n-1} in order.
ParticleEnsemble replay(std::span<const ResNetPotential> checkpoints, const InnerSchedule& schedule,
                        ParticleEnsemble initial);
ParticleEnsemble replay(std::span<const VelocityPotential* const> maps, const InnerSchedule& schedule,
                        ParticleEnsemble initial);

}  // namespace deepjko
