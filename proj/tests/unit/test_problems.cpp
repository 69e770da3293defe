#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/LU>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "deepjko/error.hpp"
#include "deepjko/problems.hpp"

using namespace deepjko;

namespace {

// Pearson test of CDF-transformed draws against k equal bins, at the 0.1% level.
bool chi_squared_ok(const std::vector<double>& u, std::size_t k) {
  std::vector<double> counts(k, 0.0);
  for (double v : u) counts[std::min(k - 1, static_cast<std::size_t>(v * static_cast<double>(k)))] += 1.0;
  const double expect = static_cast<double>(u.size()) / static_cast<double>(k);
  double stat = 0.0;
  for (double c : counts) stat += (c - expect) * (c - expect) / expect;
  const boost::math::chi_squared dist(static_cast<double>(k - 1));
  return stat < boost::math::quantile(dist, 0.999);
}

}  // namespace

TEST_CASE("gaussian sampler: mean and goodness of fit") {
  std::mt19937_64 rng(1);
  const Eigen::Vector2d c(1.0, -2.0);
  const Distribution g = Distribution::gaussian_mixture({c}, 0.5);
  const std::size_t n = 20000;
  const Samples s = sample(g, n, rng);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  std::vector<double> u;
  const boost::math::normal nd(c[0], 0.5);
  for (std::size_t j = 0; j < n; ++j) {
    mean += Eigen::Vector2d(s.points(j, 0), s.points(j, 1)) / static_cast<double>(n);
    u.push_back(boost::math::cdf(nd, s.points(j, 0)));
    const std::vector<double> x{s.points(j, 0), s.points(j, 1)};
    CHECK(s.densities[j] == doctest::Approx(g.density(x)).epsilon(1e-14));
  }
  CHECK((mean - c).cwiseAbs().maxCoeff() < 3 * 0.5 / std::sqrt(static_cast<double>(n)));
  CHECK(chi_squared_ok(u, 20));
}

TEST_CASE("four-centre mixture puts a quarter of the mass in each quadrant") {
  std::mt19937_64 rng(2);
  const Distribution g = Distribution::gaussian_mixture(
      {Eigen::Vector2d(2, 2), Eigen::Vector2d(-2, 2), Eigen::Vector2d(-2, -2), Eigen::Vector2d(2, -2)}, 0.5);
  const Samples s = sample(g, 8000, rng);
  std::vector<double> u;
  for (std::size_t j = 0; j < 8000; ++j) {
    const int q = (s.points(j, 0) < 0) + 2 * (s.points(j, 1) < 0);
    u.push_back((q + 0.5) / 4.0);
  }
  CHECK(chi_squared_ok(u, 4));

  // The mixture density integrates to one.
  using boost::math::quadrature::gauss_kronrod;
  const double mass = gauss_kronrod<double, 61>::integrate(
      [&](double x) {
        return gauss_kronrod<double, 61>::integrate(
            [&](double y) { return g.density(std::vector<double>{x, y}); }, -8.0, 8.0, 10, 1e-12);
      },
      -8.0, 8.0, 10, 1e-12);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("truncated parabola sampler") {
  std::mt19937_64 rng(3);
  const Distribution p = Distribution::truncated_parabola(2, 1.0, 0.75, 1.0);
  const Samples s = sample(p, 10000, rng);
  std::vector<double> u;
  for (std::size_t j = 0; j < 10000; ++j) {
    const double r2 = s.points(j, 0) * s.points(j, 0) + s.points(j, 1) * s.points(j, 1);
    CHECK(r2 < 1.0);
    CHECK(s.densities[j] == doctest::Approx(0.75 * (1.0 - r2)).epsilon(1e-14));
    // r² has density 2(1 − s) on [0, 1]; CDF 1 − (1 − s)².
    u.push_back(1.0 - (1.0 - r2) * (1.0 - r2));
  }
  CHECK(chi_squared_ok(u, 20));
  CHECK(p.density(std::vector<double>{0.8, 0.7}) == 0.0);
}

TEST_CASE("product normal-uniform sampler") {
  std::mt19937_64 rng(4);
  const Distribution p = Distribution::product_normal_uniform(0.0, 1.0, 90.0, 110.0);
  const Samples s = sample(p, 10000, rng);
  std::vector<double> u1, u2;
  const boost::math::normal nd(0.0, 1.0);
  for (std::size_t j = 0; j < 10000; ++j) {
    CHECK(s.points(j, 1) >= 90.0);
    CHECK(s.points(j, 1) <= 110.0);
    u1.push_back(boost::math::cdf(nd, s.points(j, 0)));
    u2.push_back((s.points(j, 1) - 90.0) / 20.0);
    CHECK(s.densities[j] == doctest::Approx(boost::math::pdf(nd, s.points(j, 0)) / 20.0).epsilon(1e-13));
  }
  CHECK(chi_squared_ok(u1, 20));
  CHECK(chi_squared_ok(u2, 20));
}

TEST_CASE("uniform box sampler") {
  std::mt19937_64 rng(5);
  const Distribution b = Distribution::uniform_box(Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 4));
  const Samples s = sample(b, 5000, rng);
  std::vector<double> u;
  for (std::size_t j = 0; j < 5000; ++j) {
    CHECK(s.densities[j] == doctest::Approx(1.0 / 8.0));
    u.push_back(s.points(j, 1) / 4.0);
  }
  CHECK(chi_squared_ok(u, 10));
}

TEST_CASE("distribution validation") {
  CHECK_THROWS_AS(Distribution::gaussian_mixture({}, 1.0).validate(), Error);
  CHECK_THROWS_AS(Distribution::gaussian_mixture({Eigen::Vector2d(0, 0)}, -1.0).validate(), Error);
  CHECK_THROWS_AS(Distribution::uniform_box(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)).validate(), Error);
}

TEST_CASE("Barenblatt constants") {
  const BarenblattParams p = BarenblattParams::make(2, 2.0);
  CHECK(p.alpha == doctest::Approx(0.5));
  CHECK(p.beta == doctest::Approx(1.0 / 16.0));
  CHECK(p.C == doctest::Approx(1.0 / std::sqrt(8.0 * M_PI)).epsilon(1e-12));

  // Independent mass check: polar quadrature of the density formula itself.
  using boost::math::quadrature::gauss_kronrod;
  for (double t : {0.0, 0.02}) {
    const double R = barenblatt_support_radius(p, t);
    const double mass = 2 * M_PI * gauss_kronrod<double, 61>::integrate(
                                       [&](double r) { return r * barenblatt_density(p, t, std::vector<double>{r, 0.0}); },
                                       0.0, R, 10, 1e-13);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(barenblatt_density(p, t, std::vector<double>{R * 1.0001, 0.0}) == 0.0);
  }
  CHECK(barenblatt_support_radius(p, 0.0) == doctest::Approx(std::sqrt(p.C / p.beta) * std::pow(1e-3, 0.25)));

  for (std::size_t d : {1, 3, 6, 10}) {
    const BarenblattParams q = BarenblattParams::make(d, 2.0);
    CHECK(q.alpha == doctest::Approx(d / (d + 2.0)));
    CHECK(barenblatt_mass(q, 0.0) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("Barenblatt initial distribution matches the formula at t = 0") {
  const BarenblattParams p = BarenblattParams::make(2, 2.0);
  const Distribution init = barenblatt_initial(p);
  std::mt19937_64 rng(6);
  const Samples s = sample(init, 200, rng);
  for (std::size_t j = 0; j < 200; ++j) {
    const std::vector<double> x{s.points(j, 0), s.points(j, 1)};
    CHECK(s.densities[j] == doctest::Approx(barenblatt_density(p, 0.0, x)).epsilon(1e-12));
  }
}

TEST_CASE("forward map") {
  const Eigen::Vector2d g0 = forward_map(Eigen::Vector2d(0, 0));
  CHECK(g0[0] == doctest::Approx(0.09375));
  CHECK(g0[1] == doctest::Approx(0.09375));
  const Eigen::Vector2d big = forward_map(Eigen::Vector2d(40.0, 100.0));
  CHECK(big[0] == doctest::Approx(25.0));
  CHECK(big[1] == doctest::Approx(75.0));
  const Eigen::Vector2d a = forward_map(Eigen::Vector2d(-1.0, 95.0)), b = forward_map(Eigen::Vector2d(-1.0, 97.0));
  CHECK(b[0] - a[0] == doctest::Approx(0.5));
  CHECK(b[1] - a[1] == doctest::Approx(1.5));

  // 3-point finite-difference solve of −(e^{u₁} p′)′ = 1, p(0) = 0, p(1) = u₂, h = 1e-3.
  const Eigen::Vector2d u(0.4, 101.0);
  const int n = 1000;
  const double h = 1.0 / n, k = std::exp(u[0]);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n - 1, n - 1);
  Eigen::VectorXd r = Eigen::VectorXd::Constant(n - 1, h * h / k);
  for (int i = 0; i < n - 1; ++i) {
    A(i, i) = 2.0;
    if (i > 0) A(i, i - 1) = -1.0;
    if (i < n - 2) A(i, i + 1) = -1.0;
  }
  r[n - 2] += u[1];
  const Eigen::VectorXd p = A.partialPivLu().solve(r);
  const Eigen::Vector2d g = forward_map(u);
  CHECK(std::abs(g[0] - p[n / 4 - 1]) < 1e-5);
  CHECK(std::abs(g[1] - p[3 * n / 4 - 1]) < 1e-5);

  const Eigen::Matrix2d J = forward_map_jacobian(u);
  for (int i = 0; i < 2; ++i) {
    Eigen::Vector2d up = u, dn = u;
    up[i] += 1e-6;
    dn[i] -= 1e-6;
    const Eigen::Vector2d fd = (forward_map(up) - forward_map(dn)) / 2e-6;
    CHECK((J.col(i) - fd).norm() < 1e-7);
  }
}

TEST_CASE("Bayesian potential") {
  const BayesSetup s;
  const Eigen::Vector2d r = forward_map(Eigen::Vector2d::Zero()) - s.y;
  CHECK(phi_potential(s, Eigen::Vector2d::Zero()) == doctest::Approx(0.5 * r.squaredNorm() / 0.01));

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d u(n01(rng), 100 + 5 * n01(rng));
    CHECK(phi_potential(s, u) >= 0.0);
    const Eigen::Vector2d g = phi_gradient(s, u);
    for (int i = 0; i < 2; ++i) {
      Eigen::Vector2d up = u, dn = u;
      up[i] += 1e-6;
      dn[i] -= 1e-6;
      CHECK(g[i] == doctest::Approx((phi_potential(s, up) - phi_potential(s, dn)) / 2e-6).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("grid argmin lands near the noise-free inverse") {
  const BayesSetup s;
  const Eigen::Vector2d best = phi_grid_argmin(s, Eigen::Vector2d(-5, 90), Eigen::Vector2d(0, 115), 1001);
  // Noise-free inverse G(u) = y by Newton on the 2×2 system.
  Eigen::Vector2d u(-2.0, 100.0);
  for (int it = 0; it < 50; ++it) u -= forward_map_jacobian(u).lu().solve(forward_map(u) - s.y);
  CHECK((forward_map(u) - s.y).norm() < 1e-10);
  CHECK((best - u).norm() < 0.1);
  CHECK(best[0] == doctest::Approx(-2.70).epsilon(0.01));
  CHECK(best[1] == doctest::Approx(104.4).epsilon(0.001));

  // A local Newton refinement on Φ from the grid point does not move far.
  Eigen::Vector2d v = best;
  for (int it = 0; it < 30; ++it) {
    Eigen::Matrix2d H;
    for (int i = 0; i < 2; ++i) {
      Eigen::Vector2d up = v, dn = v;
      up[i] += 1e-5;
      dn[i] -= 1e-5;
      H.col(i) = (phi_gradient(s, up) - phi_gradient(s, dn)) / 2e-5;
    }
    v -= H.lu().solve(phi_gradient(s, v));
  }
  CHECK(std::abs(v[0] - best[0]) <= 5.0 / 1000);
  CHECK(std::abs(v[1] - best[1]) <= 25.0 / 1000);
}

TEST_CASE("finite-difference flow-map Jacobian on affine flows") {
  const QuadraticPotential zero(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2));
  const std::vector<double> x{0.3, 0.4};
  CHECK(fd_flowmap_jacobian(zero, {4, Integrator::RK4}, x, 1e-4).isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-12));
  Eigen::MatrixXd A(2, 2);
  A << 0.5, 0.2, 0.2, -0.3;
  const QuadraticPotential q(A, Eigen::VectorXd::Zero(2));
  // Euler with one step is exactly I − A.
  const Eigen::MatrixXd J = fd_flowmap_jacobian(q, {1, Integrator::ForwardEuler}, x, 1e-4);
  CHECK((J - (Eigen::MatrixXd::Identity(2, 2) - A)).cwiseAbs().maxCoeff() < 1e-9);
}
