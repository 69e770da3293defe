#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "deepjko/flow.hpp"
#include "deepjko/potential_net.hpp"
#include "deepjko/tape.hpp"

namespace deepjko {

enum class InternalKind {
  None,
  EntropyShortcut,  // U(z) = z log z via log ρⁿ(x) − l
  GeneralU,         // U(ρ)/ρ evaluated at the pushed density
};

struct InternalEnergy {
  InternalKind kind = InternalKind::None;
  std::function<double(double)> U;
  std::function<double(double)> dU;

  static InternalEnergy none() { return {}; }
  static InternalEnergy entropy();
  // U(z) = z log z, through the general path.
  static InternalEnergy entropy_general();
  // U(z) = z^m / (m − 1)
  static InternalEnergy power(double m);
  static InternalEnergy general(std::function<double(double)> U, std::function<double(double)> dU);

  // U(ρ)/ρ for a single density value.
  double per_mass(double rho) const;
};

struct Mobility {
  std::function<double(double)> M;
  std::function<double(double)> dM;

  static Mobility linear();      // M(ρ) = ρ
  static Mobility saturating();  // M(ρ) = ρ(1 − ρ)

  // ρ / M(ρ); throws Domain when M(ρ) ≤ 0.
  double weight(double rho) const;
};

enum class Metric { Wasserstein, NonlinearMobility, KalmanWasserstein };

struct EnergyFunctional {
  InternalEnergy internal;
  std::shared_ptr<const ad::ScalarField> external;
  std::shared_ptr<const ad::PairKernel> interaction;
  Mobility mobility = Mobility::linear();
  Metric metric = Metric::Wasserstein;
};

// V(x) = c ‖x − x₀‖²
class QuadraticField final : public ad::ScalarField {
 public:
  explicit QuadraticField(double c, std::vector<double> centre = {});
  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> out) const override;

 private:
  double c_;
  std::vector<double> centre_;
};

// W(x, y) = c ‖x − y‖²
class SquaredDistanceKernel final : public ad::PairKernel {
 public:
  explicit SquaredDistanceKernel(double c = 1.0) : c_(c) {}
  double value(std::span<const double> x, std::span<const double> y) const override;
  void gradient_first(std::span<const double> x, std::span<const double> y,
                      std::span<double> out) const override;

 private:
  double c_;
};

struct KalmanState {
  Eigen::MatrixXd C;
  Eigen::VectorXd m;
  Eigen::MatrixXd Cinv;  // empty until kalman_inverse succeeds
};

inline constexpr double kDefaultMaxCondition = 1e12;

// Empirical mean and 1/N-normalized covariance of the positions.
KalmanState covariance_mean(const ParticleEnsemble& ensemble);
// Symmetric eigen-factorization; rejects C whose condition number exceeds the bound.
Eigen::MatrixXd kalman_inverse(const Eigen::MatrixXd& C, double max_condition = kDefaultMaxCondition);

double kinetic_plain(std::span<const double> v);
double kinetic_mobility(std::span<const double> v, double rho, const Mobility& mobility);
double kinetic_kalman(std::span<const double> v, const Eigen::MatrixXd& Cinv);

struct LossOptions {
  double dt = 0.0;
  InnerSchedule schedule;
  // Overrides the ensemble covariance inverse for KalmanWasserstein.
  std::optional<Eigen::MatrixXd> Cinv;
  double max_condition = kDefaultMaxCondition;
};

struct TapedLoss {
  ad::Tape tape;
  ad::Var output;
  double value = 0.0;
};

// Records the discrete JKO loss for one batch; backward on the result gives ∇_θ.
TapedLoss batch_loss(const ResNetPotential& net, const EnergyFunctional& functional,
                     const ParticleEnsemble& ensemble, const LossOptions& options);

struct EnergyEstimate {
  double value = 0.0;
  double std = 0.0;  // sample std of the per-particle terms
  std::vector<double> per_particle;
};

// Monte-Carlo energy of the ensemble as it stands (densities are ρ at the positions).
EnergyEstimate diagnostic_energy(const EnergyFunctional& functional, const ParticleEnsemble& ensemble);

// log ρ − log q(x) for a field returning log q.
double kl_internal(double rho, std::span<const double> x, const ad::ScalarField& log_q);

}  // namespace deepjko
