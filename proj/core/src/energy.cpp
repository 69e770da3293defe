#include "deepjko/energy.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "deepjko/batch_field.hpp"
#include "deepjko/error.hpp"

namespace deepjko {
namespace {

std::string show(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void require_positive_density(double rho, const char* where) {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw Error(ErrorCode::Domain, std::string(where) + ": density must be positive and finite, got " + show(rho));
  }
}

std::shared_ptr<const ad::UnaryKernel> exp_kernel() {
  static const auto k = ad::make_unary(
      "exp", [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
  return k;
}

std::shared_ptr<const ad::UnaryKernel> per_mass_kernel(const InternalEnergy& internal) {
  return ad::make_unary(
      "U/rho", [internal](double rho) { return internal.per_mass(rho); },
      [internal](double rho) { return (internal.dU(rho) * rho - internal.U(rho)) / (rho * rho); });
}

std::shared_ptr<const ad::UnaryKernel> weight_kernel(const Mobility& mobility) {
  return ad::make_unary(
      "rho/M", [mobility](double rho) { return mobility.weight(rho); },
      [mobility](double rho) {
        const double m = mobility.M(rho);
        return (m - rho * mobility.dM(rho)) / (m * m);
      });
}

}  // namespace

InternalEnergy InternalEnergy::entropy() {
  InternalEnergy e;
  e.kind = InternalKind::EntropyShortcut;
  e.U = [](double z) { return z * std::log(z); };
  e.dU = [](double z) { return std::log(z) + 1.0; };
  return e;
}

InternalEnergy InternalEnergy::entropy_general() {
  InternalEnergy e = entropy();
  e.kind = InternalKind::GeneralU;
  return e;
}

InternalEnergy InternalEnergy::power(double m) {
  if (!(m > 1.0)) throw Error(ErrorCode::InvalidArgument, "internal energy: porous exponent must exceed 1");
  return general([m](double z) { return std::pow(z, m) / (m - 1.0); },
                 [m](double z) { return m / (m - 1.0) * std::pow(z, m - 1.0); });
}

InternalEnergy InternalEnergy::general(std::function<double(double)> U, std::function<double(double)> dU) {
  if (!U || !dU) throw Error(ErrorCode::InvalidArgument, "internal energy: U and U' are both required");
  InternalEnergy e;
  e.kind = InternalKind::GeneralU;
  e.U = std::move(U);
  e.dU = std::move(dU);
  return e;
}

double InternalEnergy::per_mass(double rho) const {
  if (kind == InternalKind::None) return 0.0;
  require_positive_density(rho, "internal energy");
  if (kind == InternalKind::EntropyShortcut) return std::log(rho);
  return U(rho) / rho;
}

Mobility Mobility::linear() {
  return {[](double r) { return r; }, [](double) { return 1.0; }};
}

Mobility Mobility::saturating() {
  return {[](double r) { return r * (1.0 - r); }, [](double r) { return 1.0 - 2.0 * r; }};
}

double Mobility::weight(double rho) const {
  const double m = M(rho);
  if (!(m > 0.0)) {
    throw Error(ErrorCode::Domain, "mobility: M(rho) <= 0 at rho = " + show(rho));
  }
  return rho / m;
}

QuadraticField::QuadraticField(double c, std::vector<double> centre) : c_(c), centre_(std::move(centre)) {}

double QuadraticField::value(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] - (centre_.empty() ? 0.0 : centre_.at(i));
    s += r * r;
  }
  return c_ * s;
}

void QuadraticField::gradient(std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * c_ * (x[i] - (centre_.empty() ? 0.0 : centre_.at(i)));
}

double SquaredDistanceKernel::value(std::span<const double> x, std::span<const double> y) const {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return c_ * s;
}

void SquaredDistanceKernel::gradient_first(std::span<const double> x, std::span<const double> y,
                                           std::span<double> out) const {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * c_ * (x[i] - y[i]);
}

KalmanState covariance_mean(const ParticleEnsemble& ensemble) {
  const std::size_t n = ensemble.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "covariance: need at least 2 particles");
  const auto x = ensemble.positions.as_matrix();
  KalmanState s;
  s.m = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - s.m.transpose();
  s.C = centred.transpose() * centred / static_cast<double>(n);
  return s;
}

Eigen::MatrixXd kalman_inverse(const Eigen::MatrixXd& C, double max_condition) {
  if (C.rows() != C.cols() || C.rows() == 0) throw Error(ErrorCode::ShapeMismatch, "covariance: must be square");
  if (!C.allFinite()) throw Error(ErrorCode::NonFinite, "covariance: non-finite entries");
  const Eigen::MatrixXd sym = 0.5 * (C + C.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::SingularCovariance, "covariance: eigensolver failed");
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > max_condition) {
    throw Error(ErrorCode::SingularCovariance,
                "covariance: condition number " + (lo > 0.0 ? show(hi / lo) : std::string("inf")) +
                    " exceeds " + show(max_condition));
  }
  const auto& V = eig.eigenvectors();
  Eigen::MatrixXd inv = V * eig.eigenvalues().cwiseInverse().asDiagonal() * V.transpose();
  return 0.5 * (inv + inv.transpose());
}

double kinetic_plain(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double kinetic_mobility(std::span<const double> v, double rho, const Mobility& mobility) {
  return mobility.weight(rho) * kinetic_plain(v);
}

double kinetic_kalman(std::span<const double> v, const Eigen::MatrixXd& Cinv) {
  if (static_cast<std::size_t>(Cinv.rows()) != v.size() || Cinv.rows() != Cinv.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "kinetic_kalman: Cinv does not match the velocity");
  }
  const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
  return x.dot(Cinv * x);
}

TapedLoss batch_loss(const ResNetPotential& net, const EnergyFunctional& functional,
                     const ParticleEnsemble& ensemble, const LossOptions& options) {
  if (!(options.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "loss: dt must be positive");
  options.schedule.validate();
  ensemble.validate();
  net.validate();
  if (net.dim != ensemble.dim()) throw Error(ErrorCode::ShapeMismatch, "loss: network and ensemble dimensions differ");

  const std::size_t n = ensemble.size();
  TapedLoss out;
  ad::Tape& tape = out.tape;
  TapedOps ops{tape};
  const NetView<ad::Var> view = taped_view(ops, net);

  ad::Tensor rho_row(1, n);
  ad::Tensor log_rho_row(1, n);
  for (std::size_t j = 0; j < n; ++j) {
    rho_row[j] = ensemble.densities[j];
    log_rho_row[j] = std::log(ensemble.densities[j]);
  }
  const ad::Var rho_n = tape.constant(rho_row);
  auto pushed = [&](ad::Var l) { return tape.mul(rho_n, tape.unary(tape.scale(l, -1.0), exp_kernel())); };

  std::optional<ad::Var> cinv;
  if (functional.metric == Metric::KalmanWasserstein) {
    Eigen::MatrixXd C = options.Cinv ? *options.Cinv
                                     : kalman_inverse(covariance_mean(ensemble).C, options.max_condition);
    if (static_cast<std::size_t>(C.rows()) != net.dim || C.rows() != C.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "loss: Cinv does not match the dimension");
    }
    cinv = tape.constant(ad::Tensor::from_eigen(C));
  }
  const auto weight = functional.metric == Metric::NonlinearMobility ? weight_kernel(functional.mobility) : nullptr;

  auto kinetic = [&](ad::Var grad, ad::Var l) -> ad::Var {
    switch (functional.metric) {
      case Metric::Wasserstein:
        return tape.col_sum(tape.mul(grad, grad));
      case Metric::NonlinearMobility:
        return tape.mul(tape.unary(pushed(l), weight), tape.col_sum(tape.mul(grad, grad)));
      case Metric::KalmanWasserstein:
        return tape.col_sum(tape.mul(grad, tape.matmul(*cinv, grad)));
    }
    throw Error(ErrorCode::InvalidArgument, "loss: unknown metric");
  };

  InnerState<ad::Var> st{tape.constant(ad::transpose(ensemble.positions)), tape.constant(ad::Tensor(1, n)),
                         std::nullopt};
  auto eval = [&](ad::Var z, double tau) { return evaluate_field(ops, view, z, tau); };
  for (std::size_t k = 0; k < options.schedule.steps; ++k) {
    inner_step(ops, eval, kinetic, st, k, options.schedule.dtau(), options.schedule.integrator, true);
  }

  ad::Var per = *st.kinetic;
  std::optional<ad::Var> energy;
  auto add_energy = [&](ad::Var term) { energy = energy ? tape.add(*energy, term) : term; };
  switch (functional.internal.kind) {
    case InternalKind::None:
      break;
    case InternalKind::EntropyShortcut:
      add_energy(tape.sub(tape.constant(log_rho_row), st.l));
      break;
    case InternalKind::GeneralU:
      add_energy(tape.unary(pushed(st.l), per_mass_kernel(functional.internal)));
      break;
  }
  if (functional.external) add_energy(tape.field(st.z, functional.external));
  if (functional.interaction) add_energy(tape.pair_mean(st.z, functional.interaction));
  if (energy) per = tape.add(per, tape.scale(*energy, 2.0 * options.dt));

  out.output = tape.scale(tape.sum(per), 1.0 / static_cast<double>(n));
  out.value = tape.value(out.output).item();
  return out;
}

EnergyEstimate diagnostic_energy(const EnergyFunctional& functional, const ParticleEnsemble& ensemble) {
  ensemble.validate();
  const std::size_t n = ensemble.size();
  const ad::Tensor z = ad::transpose(ensemble.positions);
  EnergyEstimate est;
  est.per_particle.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) est.per_particle[j] = functional.internal.per_mass(ensemble.densities[j]);
  if (functional.external) {
    const ad::Tensor v = ad::apply_field(z, *functional.external);
    for (std::size_t j = 0; j < n; ++j) est.per_particle[j] += v[j];
  }
  if (functional.interaction) {
    const ad::Tensor w = ad::pair_mean(z, *functional.interaction);
    for (std::size_t j = 0; j < n; ++j) est.per_particle[j] += 0.5 * w[j];
  }
  double sum = 0.0;
  for (double e : est.per_particle) {
    if (!std::isfinite(e)) throw Error(ErrorCode::NonFinite, "energy: non-finite per-particle term");
    sum += e;
  }
  est.value = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double e : est.per_particle) ss += (e - est.value) * (e - est.value);
    est.std = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return est;
}

double kl_internal(double rho, std::span<const double> x, const ad::ScalarField& log_q) {
  require_positive_density(rho, "kl");
  const double lq = log_q.value(x);
  if (!std::isfinite(lq)) throw Error(ErrorCode::Domain, "kl: reference density vanishes at the particle");
  return std::log(rho) - lq;
}

}  // namespace deepjko
