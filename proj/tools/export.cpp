#include "export.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "deepjko/error.hpp"

namespace deepjko::cli {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorCode::Format, "export: bad number '" + s + "'");
  return v;
}

std::size_t to_count(const std::string& s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorCode::Format, "export: bad integer '" + s + "'");
  return v;
}

// Reads the header, checks it, then hands each row's cells to `row`.
template <class F>
void read_rows(std::istream& in, const std::vector<std::string>& expected_prefix, bool open_ended, F&& row) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Format, "export: empty file");
  const std::vector<std::string> header = split(line);
  const bool ok = open_ended ? header.size() >= expected_prefix.size() : header.size() == expected_prefix.size();
  if (!ok || !std::equal(expected_prefix.begin(), expected_prefix.end(), header.begin())) {
    throw Error(ErrorCode::Format, "export: unexpected header '" + line + "'");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) throw Error(ErrorCode::Format, "export: ragged row '" + line + "'");
    row(header, cells);
  }
}

void check(std::ostream& out, const char* what) {
  if (!out) throw Error(ErrorCode::Io, std::string("export: writing ") + what + " failed");
}

}  // namespace

void write_energy(const RunRecord& run, std::ostream& out) {
  out << "step,t,energy,energy_std\n";
  for (const Snapshot& s : run.snapshots) {
    if (s.step == 0) continue;
    out << s.step << ',' << fmt(s.t) << ',' << fmt(s.energy) << ',' << fmt(s.energy_std) << '\n';
  }
  check(out, "energy");
}

void write_loss(const RunRecord& run, std::ostream& out) {
  out << "step,iteration,loss\n";
  for (const Snapshot& s : run.snapshots) {
    for (std::size_t i = 0; i < s.losses.size(); ++i) out << s.step << ',' << i << ',' << fmt(s.losses[i]) << '\n';
  }
  check(out, "loss");
}

void write_trajectories(const RunRecord& run, std::ostream& out) {
  if (run.snapshots.empty()) throw Error(ErrorCode::Format, "export: run has no snapshots");
  const std::size_t n = run.snapshots.front().ensemble.size();
  const std::size_t d = run.snapshots.front().ensemble.dim();
  for (const Snapshot& s : run.snapshots) {
    if (s.ensemble.size() != n || s.ensemble.dim() != d) {
      throw Error(ErrorCode::Format, "export: snapshots disagree on particle count or dimension");
    }
  }
  out << "id,step,t";
  for (std::size_t i = 0; i < d; ++i) out << ",x" << i;
  out << '\n';
  for (std::size_t j = 0; j < n; ++j) {
    for (const Snapshot& s : run.snapshots) {
      out << j << ',' << s.step << ',' << fmt(s.t);
      for (std::size_t i = 0; i < d; ++i) out << ',' << fmt(s.ensemble.positions(j, i));
      out << '\n';
    }
  }
  check(out, "trajectories");
}

std::vector<EnergyRow> read_energy(std::istream& in) {
  std::vector<EnergyRow> rows;
  read_rows(in, {"step", "t", "energy", "energy_std"}, false, [&](const auto&, const auto& c) {
    rows.push_back({to_count(c[0]), to_double(c[1]), to_double(c[2]), to_double(c[3])});
  });
  return rows;
}

std::vector<LossRow> read_loss(std::istream& in) {
  std::vector<LossRow> rows;
  read_rows(in, {"step", "iteration", "loss"}, false, [&](const auto&, const auto& c) {
    rows.push_back({to_count(c[0]), to_count(c[1]), to_double(c[2])});
  });
  return rows;
}

std::vector<TrajectoryRow> read_trajectories(std::istream& in) {
  std::vector<TrajectoryRow> rows;
  read_rows(in, {"id", "step", "t"}, true, [&](const std::vector<std::string>& header, const auto& c) {
    TrajectoryRow r{to_count(c[0]), to_count(c[1]), to_double(c[2]), {}};
    for (std::size_t i = 3; i < header.size(); ++i) {
      if (header[i] != "x" + std::to_string(i - 3)) throw Error(ErrorCode::Format, "export: unexpected column " + header[i]);
      r.x.push_back(to_double(c[i]));
    }
    rows.push_back(std::move(r));
  });
  return rows;
}

const std::vector<std::string>& export_kinds() {
  static const std::vector<std::string> kinds = {"energy", "loss", "trajectories"};
  return kinds;
}

std::vector<std::filesystem::path> export_run(const std::filesystem::path& run_dir, const std::string& kind,
                                              const std::filesystem::path& out_dir) {
  const auto& kinds = export_kinds();
  if (kind != "all" && std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw Error(ErrorCode::InvalidArgument, "unknown export '" + kind + "' (energy, loss, trajectories, all)");
  }
  const RunRecord run = load_run(run_dir);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  for (const std::string& k : kinds) {
    if (kind != "all" && kind != k) continue;
    const std::filesystem::path path = out_dir / (k + ".csv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    if (k == "energy") write_energy(run, out);
    if (k == "loss") write_loss(run, out);
    if (k == "trajectories") write_trajectories(run, out);
    written.push_back(path);
  }
  return written;
}

}  // namespace deepjko::cli
