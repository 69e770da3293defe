#include "deepjko/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "deepjko/error.hpp"

namespace deepjko {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::Map<const Eigen::VectorXd> as_vec(std::span<const double> x) {
  return {x.data(), static_cast<Eigen::Index>(x.size())};
}

void require_dim(const Distribution& d, std::span<const double> x) {
  if (x.size() != d.dim) throw Error(ErrorCode::ShapeMismatch, "distribution: point has the wrong dimension");
}

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Per-component log weight + log N(x; c_k, σ²I).
std::vector<double> component_logs(const Distribution& d, std::span<const double> x) {
  const auto v = as_vec(x);
  const double dim = static_cast<double>(d.dim);
  const double norm = -0.5 * dim * std::log(2.0 * std::numbers::pi * d.sigma * d.sigma);
  std::vector<double> out(d.centres.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std::log(d.weights[k]) + norm - (v - d.centres[k]).squaredNorm() / (2.0 * d.sigma * d.sigma);
  }
  return out;
}

double log_sum_exp(const std::vector<double>& a) {
  const double hi = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double v : a) s += std::exp(v - hi);
  return hi + std::log(s);
}

std::size_t pick(const std::vector<double>& weights, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return k;
  }
  return weights.size() - 1;
}

}  // namespace

Distribution Distribution::gaussian_mixture(std::vector<Eigen::VectorXd> centres, double sigma,
                                            std::vector<double> weights) {
  Distribution d;
  d.kind = DistributionKind::GaussianMixture;
  d.dim = centres.empty() ? 0 : static_cast<std::size_t>(centres.front().size());
  if (weights.empty()) weights.assign(centres.size(), 1.0 / static_cast<double>(centres.size()));
  d.centres = std::move(centres);
  d.sigma = sigma;
  d.weights = std::move(weights);
  d.validate();
  return d;
}

Distribution Distribution::uniform_box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  Distribution d;
  d.kind = DistributionKind::UniformBox;
  d.dim = static_cast<std::size_t>(lower.size());
  d.lower = std::move(lower);
  d.upper = std::move(upper);
  d.validate();
  return d;
}

Distribution Distribution::truncated_parabola(std::size_t dim, double radius, double peak, double exponent) {
  Distribution d;
  d.kind = DistributionKind::TruncatedParabola;
  d.dim = dim;
  d.radius = radius;
  d.peak = peak;
  d.exponent = exponent;
  d.validate();
  return d;
}

Distribution Distribution::product_normal_uniform(double mean, double sd, double lo, double hi) {
  Distribution d;
  d.kind = DistributionKind::ProductNormalUniform;
  d.dim = 2;
  d.normal_mean = mean;
  d.normal_sd = sd;
  d.uniform_lo = lo;
  d.uniform_hi = hi;
  d.validate();
  return d;
}

void Distribution::validate() const {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "distribution: dimension must be at least 1");
  switch (kind) {
    case DistributionKind::GaussianMixture: {
      if (centres.empty() || weights.size() != centres.size()) {
        throw Error(ErrorCode::InvalidArgument, "distribution: mixture needs one weight per centre");
      }
      if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "distribution: sigma must be positive");
      double total = 0.0;
      for (std::size_t k = 0; k < centres.size(); ++k) {
        if (static_cast<std::size_t>(centres[k].size()) != dim) {
          throw Error(ErrorCode::ShapeMismatch, "distribution: centres differ in dimension");
        }
        if (!(weights[k] > 0.0)) throw Error(ErrorCode::InvalidArgument, "distribution: weights must be positive");
        total += weights[k];
      }
      if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, "distribution: weights must sum to 1");
      break;
    }
    case DistributionKind::UniformBox:
      if (static_cast<std::size_t>(upper.size()) != dim || !((upper - lower).array() > 0.0).all()) {
        throw Error(ErrorCode::InvalidArgument, "distribution: box needs lower < upper in every coordinate");
      }
      break;
    case DistributionKind::TruncatedParabola:
      if (!(radius > 0.0) || !(peak > 0.0) || !(exponent > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "distribution: parabola needs positive radius, peak and exponent");
      }
      break;
    case DistributionKind::ProductNormalUniform:
      if (dim != 2 || !(normal_sd > 0.0) || !(uniform_hi > uniform_lo)) {
        throw Error(ErrorCode::InvalidArgument, "distribution: normal x uniform needs d = 2, sd > 0, lo < hi");
      }
      break;
  }
}

double Distribution::log_density(std::span<const double> x) const {
  require_dim(*this, x);
  switch (kind) {
    case DistributionKind::GaussianMixture:
      return log_sum_exp(component_logs(*this, x));
    case DistributionKind::UniformBox: {
      const auto v = as_vec(x);
      if ((v.array() < lower.array()).any() || (v.array() > upper.array()).any()) return kNegInf;
      return -(upper - lower).array().log().sum();
    }
    case DistributionKind::TruncatedParabola: {
      const double s = 1.0 - as_vec(x).squaredNorm() / (radius * radius);
      if (s <= 0.0) return kNegInf;
      return std::log(peak) + exponent * std::log(s);
    }
    case DistributionKind::ProductNormalUniform:
      if (x[1] < uniform_lo || x[1] > uniform_hi) return kNegInf;
      return log_normal_pdf(x[0], normal_mean, normal_sd) - std::log(uniform_hi - uniform_lo);
  }
  return kNegInf;
}

double Distribution::density(std::span<const double> x) const {
  if (kind == DistributionKind::TruncatedParabola) {
    require_dim(*this, x);
    const double s = 1.0 - as_vec(x).squaredNorm() / (radius * radius);
    return s > 0.0 ? peak * std::pow(s, exponent) : 0.0;
  }
  return std::exp(log_density(x));
}

Samples sample(const Distribution& dist, std::size_t n, std::mt19937_64& rng) {
  dist.validate();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample: n must be at least 1");
  const std::size_t d = dist.dim;
  Samples out{ad::Tensor(n, d), std::vector<double>(n)};
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(d);

  for (std::size_t j = 0; j < n; ++j) {
    switch (dist.kind) {
      case DistributionKind::GaussianMixture: {
        const auto& c = dist.centres[pick(dist.weights, unit(rng))];
        for (std::size_t i = 0; i < d; ++i) x[i] = c[static_cast<Eigen::Index>(i)] + dist.sigma * normal(rng);
        break;
      }
      case DistributionKind::UniformBox:
        for (std::size_t i = 0; i < d; ++i) {
          const auto k = static_cast<Eigen::Index>(i);
          x[i] = dist.lower[k] + (dist.upper[k] - dist.lower[k]) * unit(rng);
        }
        break;
      case DistributionKind::TruncatedParabola: {
        // Uniform in the ball, then accept with probability ρ/peak.
        const double r2max = dist.radius * dist.radius;
        for (;;) {
          double r2 = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            x[i] = dist.radius * (2.0 * unit(rng) - 1.0);
            r2 += x[i] * x[i];
          }
          if (r2 >= r2max) continue;
          if (unit(rng) < std::pow(1.0 - r2 / r2max, dist.exponent)) break;
        }
        break;
      }
      case DistributionKind::ProductNormalUniform:
        x[0] = dist.normal_mean + dist.normal_sd * normal(rng);
        x[1] = dist.uniform_lo + (dist.uniform_hi - dist.uniform_lo) * unit(rng);
        break;
    }
    for (std::size_t i = 0; i < d; ++i) out.points(j, i) = x[i];
    out.densities[j] = dist.density(x);
    if (!(out.densities[j] > 0.0)) {
      throw Error(ErrorCode::Domain, "sample: density underflowed to zero at a sample; distribution too narrow");
    }
  }
  return out;
}

ParticleEnsemble sample_ensemble(const Distribution& dist, std::size_t n, std::mt19937_64& rng) {
  Samples s = sample(dist, n, rng);
  return make_ensemble(std::move(s.points), std::move(s.densities));
}

LogDensityField::LogDensityField(Distribution dist, double sign) : dist_(std::move(dist)), sign_(sign) {
  dist_.validate();
}

double LogDensityField::value(std::span<const double> x) const { return sign_ * dist_.log_density(x); }

void LogDensityField::gradient(std::span<const double> x, std::span<double> out) const {
  if (dist_.kind != DistributionKind::GaussianMixture) {
    throw Error(ErrorCode::InvalidArgument, "log-density gradient is only available for Gaussian mixtures");
  }
  require_dim(dist_, x);
  const std::vector<double> logs = component_logs(dist_, x);
  const double total = log_sum_exp(logs);
  const auto v = as_vec(x);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dist_.dim));
  for (std::size_t k = 0; k < logs.size(); ++k) {
    g -= std::exp(logs[k] - total) * (v - dist_.centres[k]) / (dist_.sigma * dist_.sigma);
  }
  for (std::size_t i = 0; i < dist_.dim; ++i) out[i] = sign_ * g[static_cast<Eigen::Index>(i)];
}

BarenblattParams BarenblattParams::make(std::size_t dim, double m, double t0) {
  if (dim == 0 || !(m > 1.0) || !(t0 > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "barenblatt: need d >= 1, m > 1 and t0 > 0");
  }
  BarenblattParams p;
  p.dim = dim;
  p.m = m;
  p.t0 = t0;
  const double d = static_cast<double>(dim);
  p.alpha = d / (d * (m - 1.0) + 2.0);
  p.beta = (m - 1.0) * p.alpha / (2.0 * d * m);

  auto mass_for = [p](double C) mutable {
    p.C = C;
    return barenblatt_mass(p, 0.0);
  };
  // Mass scales like C^q; the power law brackets the root, bisection pins it.
  const double q = 1.0 / (m - 1.0) + d / 2.0;
  const double guess = std::pow(mass_for(1.0), -1.0 / q);
  const auto root = boost::math::tools::bisect([&](double C) { return mass_for(C) - 1.0; }, 0.5 * guess,
                                               2.0 * guess, boost::math::tools::eps_tolerance<double>(52));
  p.C = 0.5 * (root.first + root.second);
  return p;
}

double barenblatt_radial(const BarenblattParams& p, double t, double r) {
  if (t < 0.0) throw Error(ErrorCode::InvalidArgument, "barenblatt: t must be non-negative");
  const double tt = t + p.t0;
  const double d = static_cast<double>(p.dim);
  const double inner = p.C - p.beta * r * r * std::pow(tt, -2.0 * p.alpha / d);
  if (inner <= 0.0) return 0.0;
  return std::pow(tt, -p.alpha) * std::pow(inner, 1.0 / (p.m - 1.0));
}

double barenblatt_density(const BarenblattParams& p, double t, std::span<const double> x) {
  if (x.size() != p.dim) throw Error(ErrorCode::ShapeMismatch, "barenblatt: point has the wrong dimension");
  return barenblatt_radial(p, t, as_vec(x).norm());
}

double barenblatt_support_radius(const BarenblattParams& p, double t) {
  if (t < 0.0) throw Error(ErrorCode::InvalidArgument, "barenblatt: t must be non-negative");
  return std::sqrt(p.C / p.beta) * std::pow(t + p.t0, p.alpha / static_cast<double>(p.dim));
}

double barenblatt_mass(const BarenblattParams& p, double t) {
  const double d = static_cast<double>(p.dim);
  const double sphere = 2.0 * std::pow(std::numbers::pi, d / 2.0) / boost::math::tgamma(d / 2.0);
  const double R = barenblatt_support_radius(p, t);
  auto f = [&](double r) { return barenblatt_radial(p, t, r) * std::pow(r, d - 1.0); };
  return sphere * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, R, 15, 1e-14);
}

Distribution barenblatt_initial(const BarenblattParams& p) {
  const double exponent = 1.0 / (p.m - 1.0);
  return Distribution::truncated_parabola(p.dim, barenblatt_support_radius(p, 0.0),
                                          std::pow(p.t0, -p.alpha) * std::pow(p.C, exponent), exponent);
}

void BayesSetup::validate() const {
  for (const Eigen::Matrix2d* A : {&Gamma, &Gamma0}) {
    if ((*A - A->transpose()).cwiseAbs().maxCoeff() > 0.0 || A->llt().info() != Eigen::Success) {
      throw Error(ErrorCode::InvalidArgument, "bayes: covariances must be symmetric positive definite");
    }
  }
}

Eigen::Vector2d forward_map(const Eigen::Vector2d& u) {
  auto p = [&](double x) { return u[1] * x + std::exp(-u[0]) * (-0.5 * x * x + 0.5 * x); };
  return {p(0.25), p(0.75)};
}

Eigen::Matrix2d forward_map_jacobian(const Eigen::Vector2d& u) {
  const double e = std::exp(-u[0]);
  Eigen::Matrix2d J;
  J << -e * (-0.5 * 0.0625 + 0.125), 0.25, -e * (-0.5 * 0.5625 + 0.375), 0.75;
  return J;
}

double phi_potential(const BayesSetup& setup, const Eigen::Vector2d& u) {
  const Eigen::Vector2d r = forward_map(u) - setup.y;
  return 0.5 * r.dot(setup.Gamma.llt().solve(r)) + 0.5 * u.dot(setup.Gamma0.llt().solve(u));
}

Eigen::Vector2d phi_gradient(const BayesSetup& setup, const Eigen::Vector2d& u) {
  const Eigen::Vector2d r = forward_map(u) - setup.y;
  return forward_map_jacobian(u).transpose() * setup.Gamma.llt().solve(r) + setup.Gamma0.llt().solve(u);
}

PhiField::PhiField(BayesSetup setup) : setup_(std::move(setup)) { setup_.validate(); }

double PhiField::value(std::span<const double> x) const {
  if (x.size() != 2) throw Error(ErrorCode::ShapeMismatch, "phi: parameter must be 2-dimensional");
  return phi_potential(setup_, Eigen::Vector2d(x[0], x[1]));
}

void PhiField::gradient(std::span<const double> x, std::span<double> out) const {
  const Eigen::Vector2d g = phi_gradient(setup_, Eigen::Vector2d(x[0], x[1]));
  out[0] = g[0];
  out[1] = g[1];
}

Eigen::Vector2d phi_grid_argmin(const BayesSetup& setup, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                                std::size_t n) {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "phi grid: need at least 2 points per axis");
  Eigen::Vector2d best = lo;
  double best_value = std::numeric_limits<double>::infinity();
  const Eigen::Vector2d step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Vector2d u(lo[0] + static_cast<double>(i) * step[0], lo[1] + static_cast<double>(k) * step[1]);
      const double v = phi_potential(setup, u);
      if (v < best_value) {
        best_value = v;
        best = u;
      }
    }
  }
  return best;
}

Eigen::MatrixXd fd_flowmap_jacobian(const VelocityPotential& phi, const InnerSchedule& schedule,
                                    std::span<const double> x, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "fd jacobian: h must be positive");
  const std::size_t d = x.size();
  if (d != phi.dim()) throw Error(ErrorCode::ShapeMismatch, "fd jacobian: point has the wrong dimension");
  ad::Tensor pts(2 * d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      pts(2 * i, c) = x[c];
      pts(2 * i + 1, c) = x[c];
    }
    pts(2 * i, i) += h;
    pts(2 * i + 1, i) -= h;
  }
  const ParticleEnsemble out = integrate(phi, schedule, make_ensemble(pts, std::vector<double>(2 * d, 1.0)));
  Eigen::MatrixXd J(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
          (out.positions(2 * i, r) - out.positions(2 * i + 1, r)) / (2.0 * h);
    }
  }
  return J;
}

}  // namespace deepjko
