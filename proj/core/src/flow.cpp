#include "deepjko/flow.hpp"

#include <cmath>
#include <string>

#include "deepjko/error.hpp"

namespace deepjko {
namespace {

ad::Tensor row_of(const std::vector<double>& v) {
  return ad::Tensor({1, v.size()}, v);
}

struct NoKinetic {
  template <class V>
  V operator()(const V&, const V&) const {
    throw Error(ErrorCode::InvalidArgument, "flow: kinetic cost requested in eager integration");
  }
};

InnerState<ad::Tensor> load_state(const ParticleEnsemble& e) {
  return {ad::transpose(e.positions), row_of(e.logdets), std::nullopt};
}

ParticleEnsemble store_state(const ParticleEnsemble& base, const InnerState<ad::Tensor>& st) {
  ParticleEnsemble out = base;
  out.positions = ad::transpose(st.z);
  out.logdets.assign(st.l.values().begin(), st.l.values().end());
  ad::require_finite(out.positions, "flow positions");
  ad::require_finite(st.l, "flow logdets");
  return out;
}

ParticleEnsemble single_step(const VelocityPotential& phi, std::size_t k, const InnerSchedule& schedule,
                             const ParticleEnsemble& ensemble, Integrator integrator) {
  schedule.validate();
  ensemble.validate();
  if (k >= schedule.steps) {
    throw Error(ErrorCode::InvalidArgument, "flow: inner step index " + std::to_string(k) + " out of range");
  }
  if (phi.dim() != ensemble.dim()) throw Error(ErrorCode::ShapeMismatch, "flow: potential/ensemble dimension mismatch");
  EagerOps ops;
  auto st = load_state(ensemble);
  inner_step(ops, [&](const ad::Tensor& z, double tau) { return phi.evaluate(z, tau); }, NoKinetic{}, st, k,
             schedule.dtau(), integrator, false);
  return store_state(ensemble, st);
}

}  // namespace

void InnerSchedule::validate() const {
  if (steps == 0) throw Error(ErrorCode::InvalidArgument, "flow: N_tau must be at least 1");
}

void ParticleEnsemble::validate() const {
  const std::size_t n = size();
  if (n == 0 || dim() == 0) throw Error(ErrorCode::InvalidArgument, "ensemble: need N >= 1 and d >= 1");
  if (logdets.size() != n || densities.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "ensemble: per-particle arrays do not match N");
  }
  for (double rho : densities) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw Error(ErrorCode::Domain, "ensemble: densities must be positive and finite");
  }
}

ParticleEnsemble make_ensemble(ad::Tensor positions, std::vector<double> densities) {
  ParticleEnsemble e;
  e.positions = std::move(positions);
  e.logdets.assign(e.positions.rows(), 0.0);
  e.densities = std::move(densities);
  e.validate();
  return e;
}

NetworkPotential::NetworkPotential(const ResNetPotential& net) : dim_(net.dim), view_(eager_view(net)) {
  net.validate();
}

FieldEval<ad::Tensor> NetworkPotential::evaluate(const ad::Tensor& points, double tau) const {
  EagerOps ops;
  return evaluate_field(ops, view_, points, tau);
}

QuadraticPotential::QuadraticPotential(Eigen::MatrixXd a, Eigen::VectorXd b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != b_.size() || a_.cols() != b_.size()) throw Error(ErrorCode::ShapeMismatch, "quadratic potential: shape mismatch");
  if ((a_ - a_.transpose()).cwiseAbs().maxCoeff() > 1e-14) {
    throw Error(ErrorCode::InvalidArgument, "quadratic potential: matrix must be symmetric");
  }
}

FieldEval<ad::Tensor> QuadraticPotential::evaluate(const ad::Tensor& points, double) const {
  const auto x = points.as_matrix();
  FieldEval<ad::Tensor> out;
  out.grad = ad::Tensor(points.rows(), points.cols());
  out.grad.as_matrix() = (a_ * x).colwise() + b_;
  out.phi = ad::Tensor(1, points.cols());
  out.phi.as_matrix() = 0.5 * (x.cwiseProduct(a_ * x)).colwise().sum() + (b_.transpose() * x);
  out.laplacian = ad::Tensor(1, points.cols(), a_.trace());
  return out;
}

ParticleEnsemble step_euler(const VelocityPotential& phi, std::size_t k, const InnerSchedule& schedule,
                            const ParticleEnsemble& ensemble) {
  return single_step(phi, k, schedule, ensemble, Integrator::ForwardEuler);
}

ParticleEnsemble step_rk4(const VelocityPotential& phi, std::size_t k, const InnerSchedule& schedule,
                          const ParticleEnsemble& ensemble) {
  return single_step(phi, k, schedule, ensemble, Integrator::RK4);
}

ParticleEnsemble integrate(const VelocityPotential& phi, const InnerSchedule& schedule, ParticleEnsemble ensemble) {
  schedule.validate();
  ensemble.validate();
  if (phi.dim() != ensemble.dim()) throw Error(ErrorCode::ShapeMismatch, "flow: potential/ensemble dimension mismatch");
  std::fill(ensemble.logdets.begin(), ensemble.logdets.end(), 0.0);
  EagerOps ops;
  auto st = load_state(ensemble);
  auto eval = [&](const ad::Tensor& z, double tau) { return phi.evaluate(z, tau); };
  for (std::size_t k = 0; k < schedule.steps; ++k) {
    inner_step(ops, eval, NoKinetic{}, st, k, schedule.dtau(), schedule.integrator, false);
  }
  ParticleEnsemble out = store_state(ensemble, st);
  out.densities = push_density(out);
  out.step = ensemble.step + 1;
  return out;
}

ParticleEnsemble integrate(const ResNetPotential& net, const InnerSchedule& schedule, ParticleEnsemble ensemble) {
  return integrate(NetworkPotential(net), schedule, std::move(ensemble));
}

std::vector<double> push_density(const ParticleEnsemble& ensemble) {
  std::vector<double> out(ensemble.densities.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double det = std::exp(ensemble.logdets[j]);
    const double rho = ensemble.densities[j] / det;
    if (!std::isfinite(det) || det == 0.0 || !std::isfinite(rho) || !(rho > 0.0)) {
      throw Error(ErrorCode::NonFinite, "push_density: exp(logdet) out of range at particle " + std::to_string(j));
    }
    out[j] = rho;
  }
  return out;
}

ParticleEnsemble replay(std::span<const ResNetPotential> checkpoints, const InnerSchedule& schedule,
                        ParticleEnsemble initial) {
  for (const ResNetPotential& net : checkpoints) initial = integrate(net, schedule, std::move(initial));
  return initial;
}

ParticleEnsemble replay(std::span<const VelocityPotential* const> maps, const InnerSchedule& schedule,
                        ParticleEnsemble initial) {
  for (const VelocityPotential* phi : maps) {
    if (!phi) throw Error(ErrorCode::MissingCheckpoint, "replay: missing map");
    initial = integrate(*phi, schedule, std::move(initial));
  }
  return initial;
}

}  // namespace deepjko
