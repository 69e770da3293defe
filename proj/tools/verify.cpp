#include "verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <random>

#include <Eigen/LU>

#include "deepjko/energy.hpp"
#include "deepjko/error.hpp"
#include "deepjko/flow.hpp"
#include "deepjko/potential_net.hpp"
#include "deepjko/problems.hpp"

namespace deepjko::cli {
namespace {

constexpr double kGradTol = 1e-6;
constexpr double kHessTol = 1e-5;
constexpr double kSymTol = 1e-12;
constexpr double kParamTol = 1e-5;
constexpr double kJacobiTol = 1e-3;
constexpr double kMassTol = 1e-8;
constexpr double kBvpTol = 1e-9;
constexpr double kJacTol = 1e-7;

Check make_check(std::string name, double measured, double tol) {
  return {std::move(name), measured, tol, measured < tol};
}

// Five-point central difference of f along coordinate i.
template <class F>
auto diff5(F&& f, Eigen::VectorXd x, Eigen::Index i, double h) {
  const double x0 = x[i];
  x[i] = x0 + 2 * h;
  auto a = f(x);
  x[i] = x0 + h;
  auto b = f(x);
  x[i] = x0 - h;
  auto c = f(x);
  x[i] = x0 - 2 * h;
  auto e = f(x);
  return decltype(a)((-a + 8.0 * b - 8.0 * c + e) / (12.0 * h));
}

// s = (x, τ); the derivative helpers differentiate with respect to all of s.
struct NetCase {
  ResNetPotential net;
  Eigen::VectorXd s;
};

std::span<const double> spatial(const Eigen::VectorXd& s) {
  return {s.data(), static_cast<std::size_t>(s.size() - 1)};
}
double phi_at(const ResNetPotential& net, const Eigen::VectorXd& s) { return forward(net, s[s.size() - 1], spatial(s)); }
Eigen::VectorXd grad_at(const ResNetPotential& net, const Eigen::VectorXd& s) {
  return input_gradient(net, s[s.size() - 1], spatial(s));
}

NetCase random_case(std::size_t k, std::mt19937_64& rng) {
  static constexpr std::array<std::size_t, 2> Ls{2, 3};
  static constexpr std::array<std::size_t, 3> ds{1, 2, 10};
  static constexpr std::array<std::size_t, 2> ms{8, 64};
  const std::size_t L = Ls[k % 2];
  const std::size_t d = ds[(k / 2) % 3];
  const std::size_t m = ms[(k / 6) % 2];
  NetCase c{ResNetPotential::random(d, m, L, InitMode::ScaledNormal, rng), Eigen::VectorXd(d + 1)};
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  for (std::size_t i = 0; i < d; ++i) c.s[static_cast<Eigen::Index>(i)] = n01(rng);
  c.s[static_cast<Eigen::Index>(d)] = u01(rng);
  return c;
}

std::vector<Check> suite_grad(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < o.cases; ++k) {
    NetCase c = random_case(k, rng);
    const Eigen::VectorXd g = grad_at(c.net, c.s);
    Eigen::VectorXd fd(c.s.size());
    for (Eigen::Index i = 0; i < c.s.size(); ++i) {
      fd[i] = diff5([&](const Eigen::VectorXd& y) { return phi_at(c.net, y); }, c.s, i, 1e-3);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));
  }

  // Parameter gradient of a small Wasserstein + entropy + quadratic loss.
  std::normal_distribution<double> n01;
  EnergyFunctional fn;
  fn.internal = InternalEnergy::entropy();
  fn.external = std::make_shared<QuadraticField>(0.5);
  ResNetPotential net = ResNetPotential::random(2, 8, 3, InitMode::ScaledNormal, rng);
  ad::Tensor pos(16, 2);
  for (double& v : pos.values()) v = n01(rng);
  const ParticleEnsemble ens = make_ensemble(pos, std::vector<double>(16, 0.2));
  LossOptions lo;
  lo.dt = 0.1;
  lo.schedule = {2, Integrator::RK4};
  TapedLoss loss = batch_loss(net, fn, ens, lo);
  const ad::Gradients grads = loss.tape.backward(loss.output);
  double pworst = 0.0;
  auto params = net.parameters();
  std::uniform_int_distribution<std::size_t> pick_p(0, params.size() - 1);
  for (int r = 0; r < 20; ++r) {
    const std::size_t p = pick_p(rng);
    std::uniform_int_distribution<std::size_t> pick_e(0, params[p]->size() - 1);
    const std::size_t e = pick_e(rng);
    const double h = 1e-4;
    const double orig = (*params[p])[e];
    auto value_at = [&](double v) {
      (*params[p])[e] = v;
      return batch_loss(net, fn, ens, lo).value;
    };
    const double fd =
        (-value_at(orig + 2 * h) + 8 * value_at(orig + h) - 8 * value_at(orig - h) + value_at(orig - 2 * h)) / (12 * h);
    (*params[p])[e] = orig;
    const auto it = grads.find(p);
    const double an = it == grads.end() ? 0.0 : it->second[e];
    pworst = std::max(pworst, std::abs(an - fd) / std::max(std::abs(fd), 1e-6));
  }
  return {make_check("input gradient vs finite differences (max rel)", worst, kGradTol),
          make_check("loss parameter gradient vs finite differences (max rel)", pworst, kParamTol)};
}

std::vector<Check> suite_hessian(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed + 1);
  double worst = 0.0, asym = 0.0;
  for (std::size_t k = 0; k < o.cases; ++k) {
    NetCase c = random_case(k, rng);
    const Eigen::MatrixXd H = input_hessian(c.net, c.s[c.s.size() - 1], spatial(c.s));
    Eigen::MatrixXd fd(c.s.size(), c.s.size());
    for (Eigen::Index i = 0; i < c.s.size(); ++i) {
      fd.col(i) = diff5([&](const Eigen::VectorXd& y) { return grad_at(c.net, y); }, c.s, i, 1e-3);
    }
    worst = std::max(worst, (H - fd).norm() / std::max(fd.norm(), 1e-12));
    asym = std::max(asym, (H - H.transpose()).cwiseAbs().maxCoeff() / std::max(H.cwiseAbs().maxCoeff(), 1e-300));
  }
  return {make_check("input hessian vs finite differences (max rel)", worst, kHessTol),
          make_check("input hessian asymmetry (max rel)", asym, kSymTol)};
}

// max_j |l_j(1) − log|det ∂T/∂x|| over a handful of points.
double jacobi_error(const ResNetPotential& net, std::size_t ntau, const ad::Tensor& pts) {
  const InnerSchedule sched{ntau, Integrator::RK4};
  const NetworkPotential phi(net);
  const ParticleEnsemble out = integrate(phi, sched, make_ensemble(pts, std::vector<double>(pts.rows(), 1.0)));
  double worst = 0.0;
  for (std::size_t j = 0; j < pts.rows(); ++j) {
    std::vector<double> x(pts.cols());
    for (std::size_t i = 0; i < pts.cols(); ++i) x[i] = pts(j, i);
    const Eigen::MatrixXd J = fd_flowmap_jacobian(phi, sched, x, 1e-5);
    worst = std::max(worst, std::abs(out.logdets[j] - std::log(std::abs(J.determinant()))));
  }
  return worst;
}

std::vector<Check> suite_jacobi(const VerifyOptions& o) {
  if (o.dim == 0 || o.ntau == 0) throw Error(ErrorCode::InvalidArgument, "jacobi: --d and --ntau must be positive");
  std::mt19937_64 rng(o.seed + 2);
  const ResNetPotential net = ResNetPotential::random(o.dim, 16, 3, InitMode::ScaledNormal, rng);
  std::normal_distribution<double> n01;
  ad::Tensor pts(8, o.dim);
  for (double& v : pts.values()) v = n01(rng);

  std::vector<Check> out;
  out.push_back(make_check("|l(1) - log|det J_fd|| at N_tau=" + std::to_string(o.ntau),
                           jacobi_error(net, o.ntau, pts), kJacobiTol));

  // Observed order from a least-squares fit of log e against log N_tau.
  const std::array<std::size_t, 4> ns{8, 16, 32, 64};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t n : ns) {
    const double x = std::log(static_cast<double>(n));
    const double y = std::log(jacobi_error(net, n, pts));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(ns.size());
  const double order = -(k * sxy - sx * sy) / (k * sxx - sx * sx);
  Check c{"refinement order over N_tau in {8,16,32,64}", order, 4.0, order >= 3.5 && order <= 4.5};
  out.push_back(c);
  return out;
}

std::vector<Check> suite_barenblatt(const VerifyOptions&) {
  std::vector<Check> out;
  const BarenblattParams p22 = BarenblattParams::make(2, 2.0);
  out.push_back(make_check("C(d=2,m=2) vs 1/sqrt(8 pi)", std::abs(p22.C - 1.0 / std::sqrt(8.0 * M_PI)), 1e-12));
  const std::array<std::pair<std::size_t, double>, 5> cases{{{1, 2.0}, {2, 2.0}, {2, 3.0}, {3, 1.5}, {10, 2.0}}};
  for (const auto& [d, m] : cases) {
    const BarenblattParams p = BarenblattParams::make(d, m);
    double worst = 0.0;
    for (double t : {0.0, 0.01, 0.1}) worst = std::max(worst, std::abs(barenblatt_mass(p, t) - 1.0));
    out.push_back(make_check("mass d=" + std::to_string(d) + " m=" + std::to_string(m).substr(0, 3), worst, kMassTol));
  }
  // Self-similarity: R(t) ∝ (t + t0)^{α/d}.
  const double r0 = barenblatt_support_radius(p22, 0.0);
  const double r1 = barenblatt_support_radius(p22, 0.099);
  out.push_back(make_check("support radius scaling", std::abs(r1 / r0 - std::pow(100.0, p22.alpha / 2.0)), 1e-12));
  return out;
}

// −(e^{u₁} p')' = 1 on [0, 1], p(0) = 0, p(1) = u₂, second-order finite differences.
Eigen::Vector2d bvp_solve(const Eigen::Vector2d& u, int n) {
  const double h = 1.0 / n;
  const double k = std::exp(u[0]);
  // Thomas algorithm on the interior nodes 1..n-1.
  std::vector<double> a(n - 1, -k / (h * h)), b(n - 1, 2 * k / (h * h)), c(n - 1, -k / (h * h)), r(n - 1, 1.0);
  r[n - 2] += k / (h * h) * u[1];
  for (int i = 1; i < n - 1; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    r[i] -= w * r[i - 1];
  }
  std::vector<double> p(n + 1, 0.0);
  p[n] = u[1];
  for (int i = n - 2; i >= 0; --i) p[i + 1] = (r[i] - (i < n - 2 ? c[i] * p[i + 2] : 0.0)) / b[i];
  return {p[n / 4], p[3 * n / 4]};
}

std::vector<Check> suite_forward_map(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed + 3);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u2(90.0, 110.0);
  double bvp = 0.0, jac = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d u(n01(rng), u2(rng));
    const Eigen::Vector2d g = forward_map(u);
    bvp = std::max(bvp, (g - bvp_solve(u, 400)).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff());
    const Eigen::Matrix2d J = forward_map_jacobian(u);
    Eigen::Matrix2d fd;
    for (Eigen::Index i = 0; i < 2; ++i) {
      fd.col(i) = diff5([](const Eigen::VectorXd& v) { return Eigen::Vector2d(forward_map(Eigen::Vector2d(v))); },
                        Eigen::VectorXd(u), i, 1e-3);
    }
    jac = std::max(jac, (J - fd).cwiseAbs().maxCoeff() / J.cwiseAbs().maxCoeff());
  }
  return {make_check("forward map vs finite-difference BVP solve (max rel)", bvp, kBvpTol),
          make_check("forward map jacobian vs finite differences (max rel)", jac, kJacTol)};
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"grad", "hessian", "jacobi", "barenblatt", "forward-map"};
  return names;
}

std::vector<Check> run_suite(const std::string& suite, const VerifyOptions& options) {
  if (suite == "grad") return suite_grad(options);
  if (suite == "hessian") return suite_hessian(options);
  if (suite == "jacobi") return suite_jacobi(options);
  if (suite == "barenblatt") return suite_barenblatt(options);
  if (suite == "forward-map") return suite_forward_map(options);
  throw Error(ErrorCode::InvalidArgument,
              "unknown verify suite '" + suite + "' (grad, hessian, jacobi, barenblatt, forward-map)");
}

}  // namespace deepjko::cli
