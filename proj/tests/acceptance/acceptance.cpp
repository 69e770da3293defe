// One PASS/FAIL line per criterion. Optional arguments select criteria by name.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "deepjko/config.hpp"
#include "deepjko/energy.hpp"
#include "deepjko/jko.hpp"
#include "deepjko/presets.hpp"
#include "deepjko/problems.hpp"
#include "verify.hpp"

using namespace deepjko;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-6;
constexpr double kHessTol = 1e-5;
constexpr double kSymTol = 1e-12;
constexpr double kParamTol = 1e-5;
constexpr std::size_t kDerivativeCases = 200;
constexpr double kJacobiTol = 1e-3;
constexpr double kOrderLo = 3.5, kOrderHi = 4.5;
constexpr double kReductionTol = 1e-12;
constexpr std::size_t kReductionEnsembles = 100;
constexpr double kOutsideFraction = 0.05;
constexpr double kSupportFactor = 1.05;
constexpr double kInnerFactor = 0.8;
constexpr double kDensityRelTol = 0.2;
constexpr double kKalmanMeanTol = 1.0;
constexpr double kMobilityMaxDensity = 1.05;
constexpr double kMcSlack = 3.0;  // ε_mc = 3·std/√N

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

JKOConfig preset_file(const std::string& name) { return load_config(fs::path(DEEPJKO_PRESET_DIR) / (name + ".json")); }

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "deepjko_acceptance" / name;
  fs::remove_all(p);
  return p;
}

// Largest rise E(n+1) − E(n) − ε_mc(n) over the run; ≤ 0 means non-increasing within slack.
double worst_energy_rise(const std::vector<Snapshot>& s) {
  double worst = -INFINITY;
  for (std::size_t n = 0; n + 1 < s.size(); ++n) {
    const double eps = kMcSlack * s[n].energy_std / std::sqrt(static_cast<double>(s[n].ensemble.size()));
    worst = std::max(worst, s[n + 1].energy - s[n].energy - eps);
  }
  return worst;
}

Outcome derivatives() {
  cli::VerifyOptions vo;
  vo.cases = kDerivativeCases;
  double g = 0, p = 0, h = 0, sym = 0;
  for (const auto& c : cli::run_suite("grad", vo)) (c.name.find("parameter") != std::string::npos ? p : g) = c.measured;
  for (const auto& c : cli::run_suite("hessian", vo)) (c.name.find("asymmetry") != std::string::npos ? sym : h) = c.measured;
  return {g < kGradTol && h < kHessTol && sym < kSymTol && p < kParamTol,
          fmt("%zu cases: gradient %.2e, hessian %.2e, asymmetry %.2e, parameter gradient %.2e", kDerivativeCases, g, h,
              sym, p)};
}

Outcome jacobi() {
  cli::VerifyOptions vo;
  vo.dim = 2;
  vo.ntau = 64;
  const auto checks = cli::run_suite("jacobi", vo);
  const double err = checks.at(0).measured, order = checks.at(1).measured;
  return {err < kJacobiTol && order >= kOrderLo && order <= kOrderHi,
          fmt("logdet error %.2e at N_tau=64, order %.3f", err, order)};
}

Outcome reductions() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> pick(3, 40);
  std::normal_distribution<double> n01;
  double worst_mob = 0, worst_kal = 0;
  const BayesSetup bayes;
  for (std::size_t k = 0; k < kReductionEnsembles; ++k) {
    const auto n = static_cast<std::size_t>(pick(rng));
    ad::Tensor x(n, 2);
    std::vector<double> rho(n);
    for (std::size_t j = 0; j < n; ++j) {
      x(j, 0) = n01(rng);
      x(j, 1) = n01(rng);
      rho[j] = 0.05 + 0.9 * std::abs(std::tanh(n01(rng)));
    }
    const ParticleEnsemble e = make_ensemble(x, rho);
    const ResNetPotential net = ResNetPotential::random(2, 8, 2 + k % 2, InitMode::ScaledNormal, rng);
    LossOptions opts;
    opts.dt = 0.05;
    opts.schedule = {1 + k % 3, k % 2 ? Integrator::RK4 : Integrator::ForwardEuler};

    EnergyFunctional w;
    w.internal = InternalEnergy::power(2.0);
    w.external = std::make_shared<QuadraticField>(0.3);
    w.interaction = std::make_shared<SquaredDistanceKernel>(0.5);
    EnergyFunctional m = w;
    m.metric = Metric::NonlinearMobility;
    m.mobility = Mobility::linear();
    const double lw = batch_loss(net, w, e, opts).value, lm = batch_loss(net, m, e, opts).value;
    worst_mob = std::max(worst_mob, std::abs(lw - lm) / std::max(1.0, std::abs(lw)));

    EnergyFunctional plain;
    plain.internal = InternalEnergy::entropy();
    plain.external = std::make_shared<PhiField>(bayes);
    EnergyFunctional kal = plain;
    kal.metric = Metric::KalmanWasserstein;
    LossOptions ko = opts;
    ko.Cinv = Eigen::MatrixXd::Identity(2, 2);
    const double lp = batch_loss(net, plain, e, opts).value, lk = batch_loss(net, kal, e, ko).value;
    worst_kal = std::max(worst_kal, std::abs(lp - lk) / std::max(1.0, std::abs(lp)));
  }
  return {worst_mob <= kReductionTol && worst_kal <= kReductionTol,
          fmt("%zu ensembles: mobility M=rho %.2e, kalman Cinv=I %.2e", kReductionEnsembles, worst_mob, worst_kal)};
}

RunResult fokker_planck_run(const fs::path& dir) {
  const JKOConfig c = preset_file("fokker-planck-2d-desk");
  RunOptions o;
  o.out_dir = dir;
  return run(c, o);
}

Outcome fokker_planck() {
  const JKOConfig c = preset_file("fokker-planck-2d-desk");
  const Problem p = make_problem(c);
  const RunResult r = fokker_planck_run(work_dir("fp_a"));
  std::vector<double> dist;
  for (const Snapshot& s : r.snapshots) {
    double sum = 0;
    for (std::size_t j = 0; j < s.ensemble.size(); ++j) {
      double best = INFINITY;
      for (const auto& ctr : p.target->centres) {
        best = std::min(best, std::hypot(s.ensemble.positions(j, 0) - ctr[0], s.ensemble.positions(j, 1) - ctr[1]));
      }
      sum += best;
    }
    dist.push_back(sum / static_cast<double>(s.ensemble.size()));
  }
  bool monotone = true;
  for (std::size_t n = dist.size() - 10; n < dist.size(); ++n) monotone = monotone && dist[n] <= dist[n - 1];
  const double rise = worst_energy_rise(r.snapshots);
  return {r.snapshots.size() == 21 && rise <= 0.0 && monotone,
          fmt("energy %.4f -> %.4f, worst rise beyond slack %.2e, centre distance %.4f -> %.4f (last 10 %s)",
              r.snapshots.front().energy, r.snapshots.back().energy, rise, dist[10], dist.back(),
              monotone ? "monotone" : "not monotone")};
}

Outcome porous() {
  const JKOConfig c = preset_file("porous-medium-2d-desk");
  const Problem p = make_problem(c);
  const RunResult r = run(c, p);
  double worst_out = 0, worst_rel = 0;
  for (const Snapshot& s : r.snapshots) {
    const double R = barenblatt_support_radius(*p.barenblatt, s.t);
    std::size_t out = 0;
    for (std::size_t j = 0; j < s.ensemble.size(); ++j) {
      const std::span<const double> x = s.ensemble.positions.values().subspan(2 * j, 2);
      const double rad = std::hypot(x[0], x[1]);
      if (rad > kSupportFactor * R) ++out;
      if (rad < kInnerFactor * R) {
        const double exact = barenblatt_density(*p.barenblatt, s.t, x);
        worst_rel = std::max(worst_rel, std::abs(s.ensemble.densities[j] - exact) / exact);
      }
    }
    worst_out = std::max(worst_out, static_cast<double>(out) / static_cast<double>(s.ensemble.size()));
  }
  return {r.snapshots.size() == 11 && worst_out <= kOutsideFraction && worst_rel <= kDensityRelTol,
          fmt("worst fraction beyond 1.05R %.3f, worst density error inside 0.8R %.3f", worst_out, worst_rel)};
}

Outcome kalman() {
  const JKOConfig c = preset_file("kalman-wasserstein-desk");
  const Problem p = make_problem(c);
  const RunResult r = run(c, p);
  const Eigen::Vector2d target = phi_grid_argmin(*p.bayes, Eigen::Vector2d(-5, 90), Eigen::Vector2d(0, 115), 1001);
  const auto& e = r.snapshots.back().ensemble;
  const Eigen::Vector2d mean = e.positions.as_matrix().colwise().mean().transpose();
  const double gap = (mean - target).norm();
  const double rise = worst_energy_rise(r.snapshots);
  return {r.snapshots.back().t >= 5.0 - 1e-12 && gap <= kKalmanMeanTol && rise <= 0.0,
          fmt("t=%.2f mean (%.3f, %.3f), argmin (%.3f, %.3f), distance %.3f, worst rise beyond slack %.2e",
              r.snapshots.back().t, mean[0], mean[1], target[0], target[1], gap, rise)};
}

double iqr(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto q = [&](double f) {
    const double pos = f * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return lo + 1 < v.size() ? v[lo] * (1 - frac) + v[lo + 1] * frac : v[lo];
  };
  return q(0.75) - q(0.25);
}

Outcome mobility() {
  const JKOConfig c = preset_file("nonlocal-mobility-desk");
  const RunResult r = run(c);
  double max_rho = 0;
  bool shrinking = true;
  std::vector<double> spread;
  for (const Snapshot& s : r.snapshots) {
    max_rho = std::max(max_rho, *std::max_element(s.ensemble.densities.begin(), s.ensemble.densities.end()));
    spread.push_back(iqr(s.ensemble.densities));
    if (spread.size() > 1) shrinking = shrinking && spread.back() < spread[spread.size() - 2];
  }
  return {max_rho <= kMobilityMaxDensity && shrinking,
          fmt("max density %.4f, IQR %.4f -> %.4f (%s)", max_rho, spread.front(), spread.back(),
              shrinking ? "shrinking every step" : "not shrinking")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path a = fs::temp_directory_path() / "deepjko_acceptance" / "fp_a";
  if (!fs::exists(a / "manifest.json")) fokker_planck_run(work_dir("fp_a"));
  const fs::path b = work_dir("fp_b");
  const RunResult r = fokker_planck_run(b);
  std::size_t same = 0;
  for (const Snapshot& s : r.snapshots) {
    const std::string f = snapshot_filename(s.step);
    const std::string x = slurp(a / f);
    if (!x.empty() && x == slurp(b / f)) ++same;
  }
  return {same == r.snapshots.size(), fmt("%zu of %zu snapshot files byte-identical", same, r.snapshots.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"derivatives", derivatives}, {"jacobi", jacobi},   {"reductions", reductions},   {"fokker-planck", fokker_planck},
      {"porous-medium", porous},    {"kalman", kalman},   {"mobility", mobility},       {"determinism", determinism},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool all = true;
  for (const auto& [name, fn] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
