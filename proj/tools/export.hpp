#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "deepjko/jko.hpp"

namespace deepjko::cli {

// Long-format CSVs for plotting. Floats use 17 significant digits.
//   energy.csv        step,t,energy,energy_std        one row per outer step 1..K
//   loss.csv          step,iteration,loss             one row per Adam iteration
//   trajectories.csv  id,step,t,x0,...,x{d-1}         N·(K+1) rows
void write_energy(const RunRecord& run, std::ostream& out);
void write_loss(const RunRecord& run, std::ostream& out);
void write_trajectories(const RunRecord& run, std::ostream& out);

struct EnergyRow {
  std::size_t step = 0;
  double t = 0.0;
  double energy = 0.0;
  double energy_std = 0.0;
};

struct LossRow {
  std::size_t step = 0;
  std::size_t iteration = 0;
  double loss = 0.0;
};

struct TrajectoryRow {
  std::size_t id = 0;
  std::size_t step = 0;
  double t = 0.0;
  std::vector<double> x;
};

std::vector<EnergyRow> read_energy(std::istream& in);
std::vector<LossRow> read_loss(std::istream& in);
std::vector<TrajectoryRow> read_trajectories(std::istream& in);

const std::vector<std::string>& export_kinds();

// Writes <kind>.csv under out_dir; "all" writes every kind. Returns the files written.
std::vector<std::filesystem::path> export_run(const std::filesystem::path& run_dir, const std::string& kind,
                                              const std::filesystem::path& out_dir);

}  // namespace deepjko::cli
