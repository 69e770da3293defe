#include "deepjko/presets.hpp"

#include <algorithm>
#include <memory>
#include <string>

#include "deepjko/error.hpp"

namespace deepjko {
namespace {

Eigen::VectorXd embed(std::size_t dim, double a, double b) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  v[0] = a;
  if (dim > 1) v[1] = b;
  return v;
}

JKOConfig base(std::string_view preset) {
  JKOConfig c;
  c.preset = std::string(preset);
  c.layers = 3;
  c.width = 64;
  c.batch_size = 1000;
  c.lr = 1e-5;
  c.max_iterations = 10000;
  c.schedule = {1, Integrator::ForwardEuler};
  return c;
}

void require_dim(const JKOConfig& c, std::size_t lo, std::size_t hi) {
  if (c.problem.dim < lo || c.problem.dim > hi) {
    throw Error(ErrorCode::Config, "preset " + c.preset + " does not support dimension " +
                                       std::to_string(c.problem.dim));
  }
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fokker-planck-kl", "porous-medium", "nonlocal-mobility",
                                                 "kalman-wasserstein"};
  return names;
}

bool is_preset(std::string_view name) {
  const auto& n = preset_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

JKOConfig default_config(std::string_view preset) {
  if (!is_preset(preset)) throw Error(ErrorCode::Config, "unknown preset '" + std::string(preset) + "'");
  JKOConfig c = base(preset);
  if (preset == "fokker-planck-kl") {
    c.dt = 0.025;
    c.K = 20;
  } else if (preset == "porous-medium") {
    c.width = 128;
    c.dt = 0.001;
    c.K = 120;
    c.schedule = {2, Integrator::RK4};
  } else if (preset == "nonlocal-mobility") {
    c.dt = 0.02;
    c.K = 5;
  } else {
    c.dt = 0.5;
    c.K = 40;
  }
  return c;
}

Problem make_problem(const JKOConfig& config) {
  Problem p;
  p.name = config.preset;
  const std::size_t d = config.problem.dim;

  if (config.preset == "fokker-planck-kl") {
    require_dim(config, 2, 1024);
    if (d == 2) {
      p.initial = Distribution::gaussian_mixture({embed(2, 1.2, 0.0), embed(2, -1.2, 0.0)}, 0.5);
      p.target = Distribution::gaussian_mixture(
          {embed(2, 2.0, 2.0), embed(2, -2.0, 2.0), embed(2, -2.0, -2.0), embed(2, 2.0, -2.0)}, 0.5);
    } else {
      p.initial = Distribution::gaussian_mixture({Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d))}, 1.0);
      p.target = Distribution::gaussian_mixture(
          {embed(d, 2.0, 2.5), embed(d, -2.5, 2.0), embed(d, -2.0, -2.5), embed(d, 2.5, -2.0)}, 0.5);
    }
    p.functional.internal = InternalEnergy::entropy();
    p.functional.external = std::make_shared<LogDensityField>(*p.target, -1.0);
  } else if (config.preset == "porous-medium") {
    require_dim(config, 1, 1024);
    p.barenblatt = BarenblattParams::make(d, config.problem.porous_exponent, config.problem.t0);
    p.initial = barenblatt_initial(*p.barenblatt);
    p.functional.internal = InternalEnergy::power(config.problem.porous_exponent);
  } else if (config.preset == "nonlocal-mobility") {
    require_dim(config, 2, 2);
    p.initial = Distribution::truncated_parabola(2, 1.0, 0.75, 1.0);
    p.functional.interaction = std::make_shared<SquaredDistanceKernel>(1.0);
    p.functional.mobility = Mobility::saturating();
    p.functional.metric = Metric::NonlinearMobility;
  } else if (config.preset == "kalman-wasserstein") {
    require_dim(config, 2, 2);
    p.bayes = BayesSetup{};
    p.initial = Distribution::product_normal_uniform(0.0, 1.0, 90.0, 110.0);
    p.functional.internal = InternalEnergy::entropy();
    p.functional.external = std::make_shared<PhiField>(*p.bayes);
    p.functional.metric = Metric::KalmanWasserstein;
  } else {
    throw Error(ErrorCode::Config, "unknown preset '" + config.preset + "'");
  }
  return p;
}

}  // namespace deepjko
