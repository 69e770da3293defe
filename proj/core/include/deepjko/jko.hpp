#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deepjko/config.hpp"
#include "deepjko/energy.hpp"
#include "deepjko/flow.hpp"
#include "deepjko/potential_net.hpp"
#include "deepjko/presets.hpp"
#include "deepjko/tape.hpp"

namespace deepjko {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
};

// One bias-corrected Adam update. grads are keyed by position in `params`;
// missing entries count as zero.
void adam_step(AdamState& state, std::span<ad::Tensor* const> params, const ad::Gradients& grads, double lr);

// |curr − prev| / |prev|, or |curr| when prev = 0.
double stopping_error(double loss_prev, double loss_curr);

struct Snapshot {
  std::size_t step = 0;
  double t = 0.0;
  ParticleEnsemble ensemble;
  double energy = 0.0;
  double energy_std = 0.0;
  std::vector<double> losses;  // one per Adam iteration of this step
  std::size_t iterations = 0;
  bool converged = false;      // stopped on TOL rather than max-iterations
  double lr = 0.0;             // learning rate actually used
  std::string checkpoint;      // path relative to the run directory
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::ostream* log = nullptr;
  std::function<void(const Snapshot&)> on_step;
};

struct RunResult {
  std::vector<Snapshot> snapshots;  // steps 0..K
  std::vector<ResNetPotential> nets;  // φ¹..φᴷ
};

// Fresh ρ⁰ samples pushed through every map in `checkpoints`.
ParticleEnsemble resample(const JKOConfig& config, const Problem& problem,
                          std::span<const ResNetPotential> checkpoints, std::mt19937_64& rng);

RunResult run(const JKOConfig& config, const RunOptions& options = {});
RunResult run(const JKOConfig& config, const Problem& problem, const RunOptions& options = {});

// Snapshot CSV: header `step,t,id,x0,...,x{d-1},logdet,density`, 17 significant digits.
void write_snapshot(const Snapshot& snapshot, std::ostream& out);
Snapshot read_snapshot(std::istream& in);
void save_snapshot(const Snapshot& snapshot, const std::filesystem::path& path);
Snapshot load_snapshot(const std::filesystem::path& path);

std::string snapshot_filename(std::size_t step);
std::string checkpoint_filename(std::size_t step);

// Run-level manifest: config echo, per-step energy, loss curves, file paths.
std::string manifest_json(const JKOConfig& config, const Problem& problem, const RunResult& result);

// Reads a run directory written by run(): snapshots carry energies and losses from the manifest.
struct RunRecord {
  JKOConfig config;
  std::vector<Snapshot> snapshots;
};
RunRecord load_run(const std::filesystem::path& dir);

}  // namespace deepjko
