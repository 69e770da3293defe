#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "deepjko/flow.hpp"
#include "deepjko/tape.hpp"

namespace deepjko {

enum class DistributionKind {
  GaussianMixture,       // isotropic components sharing σ
  UniformBox,
  TruncatedParabola,     // peak · (1 − ‖x‖²/R²)₊^p
  ProductNormalUniform,  // N(μ, s²) × U(a, b), d = 2
};

struct Distribution {
  DistributionKind kind = DistributionKind::GaussianMixture;
  std::size_t dim = 0;

  std::vector<Eigen::VectorXd> centres;
  double sigma = 1.0;
  std::vector<double> weights;

  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  double radius = 1.0;
  double peak = 1.0;
  double exponent = 1.0;

  double normal_mean = 0.0;
  double normal_sd = 1.0;
  double uniform_lo = 0.0;
  double uniform_hi = 1.0;

  static Distribution gaussian_mixture(std::vector<Eigen::VectorXd> centres, double sigma,
                                       std::vector<double> weights = {});
  static Distribution uniform_box(Eigen::VectorXd lower, Eigen::VectorXd upper);
  static Distribution truncated_parabola(std::size_t dim, double radius, double peak, double exponent);
  static Distribution product_normal_uniform(double mean, double sd, double lo, double hi);

  void validate() const;
  double density(std::span<const double> x) const;
  double log_density(std::span<const double> x) const;
};

struct Samples {
  ad::Tensor points;  // n × d
  std::vector<double> densities;
};

Samples sample(const Distribution& dist, std::size_t n, std::mt19937_64& rng);
ParticleEnsemble sample_ensemble(const Distribution& dist, std::size_t n, std::mt19937_64& rng);

// sign · log ρ(x). The gradient is available for Gaussian mixtures.
class LogDensityField final : public ad::ScalarField {
 public:
  LogDensityField(Distribution dist, double sign);
  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> out) const override;

 private:
  Distribution dist_;
  double sign_;
};

struct BarenblattParams {
  std::size_t dim = 2;
  double m = 2.0;
  double t0 = 1e-3;
  double alpha = 0.0;
  double beta = 0.0;
  double C = 0.0;

  // Fills α, β and solves for the C that gives unit mass.
  static BarenblattParams make(std::size_t dim, double m, double t0 = 1e-3);
};

double barenblatt_density(const BarenblattParams& p, double t, std::span<const double> x);
double barenblatt_radial(const BarenblattParams& p, double t, double r);
double barenblatt_support_radius(const BarenblattParams& p, double t);
// Radial quadrature of ρ(t, ·) over R^d.
double barenblatt_mass(const BarenblattParams& p, double t);
// ρ(0, ·) as a sampleable distribution.
Distribution barenblatt_initial(const BarenblattParams& p);

struct BayesSetup {
  Eigen::Vector2d y{27.5, 79.7};
  Eigen::Matrix2d Gamma = 0.01 * Eigen::Matrix2d::Identity();
  Eigen::Matrix2d Gamma0 = 100.0 * Eigen::Matrix2d::Identity();

  void validate() const;
};

// G(u) = (p_u(0.25), p_u(0.75)) with p_u(x) = u₂x + e^{−u₁}(−x²/2 + x/2).
Eigen::Vector2d forward_map(const Eigen::Vector2d& u);
Eigen::Matrix2d forward_map_jacobian(const Eigen::Vector2d& u);
// Φ(u) = ½(G(u)−y)ᵀΓ⁻¹(G(u)−y) + ½uᵀΓ₀⁻¹u
double phi_potential(const BayesSetup& setup, const Eigen::Vector2d& u);
Eigen::Vector2d phi_gradient(const BayesSetup& setup, const Eigen::Vector2d& u);

class PhiField final : public ad::ScalarField {
 public:
  explicit PhiField(BayesSetup setup);
  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> out) const override;

 private:
  BayesSetup setup_;
};

// Minimizer of Φ over an n × n grid on [lo, hi].
Eigen::Vector2d phi_grid_argmin(const BayesSetup& setup, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                                std::size_t n);

// Central-difference Jacobian of x ↦ T(1, x), from 2d extra integrations.
Eigen::MatrixXd fd_flowmap_jacobian(const VelocityPotential& phi, const InnerSchedule& schedule,
                                    std::span<const double> x, double h);

}  // namespace deepjko
