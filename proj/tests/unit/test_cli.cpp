#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "export.hpp"
#include "verify.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "deepjko");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = deepjko::cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("deepjko_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << R"({"preset": "fokker-planck-kl",
    "net": {"width": 8},
    "jko": {"K": 2, "batch_size": 30, "max_iterations": 5, "lr": 1e-3}})";
  return p;
}

// A failure is exactly one newline-terminated line of the form error[code]: message.
bool one_error_line(const std::string& err, const std::string& code) {
  return err.rfind("error[" + code + "]: ", 0) == 0 && err.find('\n') == err.size() - 1;
}

std::size_t lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("run writes a complete run directory and export reads it back") {
  const fs::path dir = scratch("run");
  const fs::path cfg = write_config(dir);
  const fs::path out = dir / "out";
  const Result r = invoke({"run", cfg.string(), "--out", out.string(), "--set", "jko.K=1", "-q"});
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / deepjko::snapshot_filename(0)));
  CHECK(fs::exists(out / deepjko::snapshot_filename(1)));
  CHECK_FALSE(fs::exists(out / deepjko::snapshot_filename(2)));

  const Result e = invoke({"export", out.string()});
  REQUIRE(e.code == 0);
  const fs::path ex = out / "export";
  CHECK(lines(ex / "energy.csv") == 1 + 1);
  CHECK(lines(ex / "loss.csv") == 1 + 5);
  CHECK(lines(ex / "trajectories.csv") == 1 + 30 * 2);

  const deepjko::RunRecord rec = deepjko::load_run(out);
  std::ifstream tin(ex / "trajectories.csv");
  const auto traj = deepjko::cli::read_trajectories(tin);
  REQUIRE(traj.size() == 60);
  for (const auto& row : traj) {
    const auto& pos = rec.snapshots[row.step].ensemble.positions;
    CHECK(row.t == rec.snapshots[row.step].t);
    CHECK(row.x[0] == pos(row.id, 0));
    CHECK(row.x[1] == pos(row.id, 1));
  }
  std::ifstream ein(ex / "energy.csv");
  const auto energy = deepjko::cli::read_energy(ein);
  REQUIRE(energy.size() == 1);
  CHECK(energy[0].energy == rec.snapshots[1].energy);
  std::ifstream lin(ex / "loss.csv");
  const auto loss = deepjko::cli::read_loss(lin);
  for (std::size_t i = 0; i < loss.size(); ++i) CHECK(loss[i].loss == rec.snapshots[1].losses[i]);

  const Result one = invoke({"export", out.string(), "loss", "--out", (dir / "only").string()});
  CHECK(one.code == 0);
  CHECK(fs::exists(dir / "only" / "loss.csv"));
  CHECK_FALSE(fs::exists(dir / "only" / "energy.csv"));
  fs::remove_all(dir);
}

TEST_CASE("seed and overrides reach the run") {
  const fs::path dir = scratch("seed");
  const fs::path cfg = write_config(dir);
  const Result r = invoke({"run", "--config", cfg.string(), "--out", (dir / "o").string(), "--seed", "99",
                           "--overrides", "jko.K=1", "-q"});
  REQUIRE(r.code == 0);
  const deepjko::RunRecord rec = deepjko::load_run(dir / "o");
  CHECK(rec.config.seed == 99);
  CHECK(rec.config.K == 1);
  fs::remove_all(dir);
}

TEST_CASE("DEEPJKO_OUT supplies the directory when --out is absent") {
  const fs::path dir = scratch("env");
  const fs::path cfg = write_config(dir);
  ::setenv("DEEPJKO_OUT", (dir / "from_env").c_str(), 1);
  const Result r = invoke({"run", cfg.string(), "--set", "jko.K=1", "-q"});
  ::unsetenv("DEEPJKO_OUT");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "from_env" / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("invalid key fails and names it") {
  const fs::path dir = scratch("badkey");
  const fs::path cfg = write_config(dir);
  const Result r = invoke({"run", cfg.string(), "--out", (dir / "o").string(), "--set", "jko.lerning_rate=1"});
  CHECK(r.code == 3);
  CHECK(one_error_line(r.err, "config"));
  CHECK(r.err.find("jko.lerning_rate") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "o" / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("usage errors") {
  const Result none = invoke({});
  CHECK(none.code == 2);
  CHECK(one_error_line(none.err, "usage"));

  const Result verb = invoke({"train"});
  CHECK(verb.code == 2);
  CHECK(one_error_line(verb.err, "usage"));

  const Result suite = invoke({"verify", "everything"});
  CHECK(suite.code == 2);
  CHECK(one_error_line(suite.err, "usage"));
  CHECK(suite.err.find("everything") != std::string::npos);

  const Result noconf = invoke({"run"});
  CHECK(noconf.code == 2);
  CHECK(one_error_line(noconf.err, "usage"));

  const Result threads = invoke({"run", "x.json", "--threads", "0"});
  CHECK(threads.code == 2);
}

TEST_CASE("runtime errors") {
  const Result missing = invoke({"run", "/nonexistent/deepjko.json"});
  CHECK(missing.code == 3);
  CHECK(one_error_line(missing.err, "io"));

  const Result nodir = invoke({"export", "/nonexistent/run"});
  CHECK(nodir.code == 3);
  CHECK(one_error_line(nodir.err, "io"));
}

TEST_CASE("verify prints one line per check") {
  const Result r = invoke({"verify", "barenblatt"});
  CHECK(r.code == 0);
  std::istringstream in(r.out);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line); ++n) CHECK(line.rfind("PASS barenblatt: ", 0) == 0);
  CHECK(n == deepjko::cli::run_suite("barenblatt", {}).size());
}

TEST_CASE("info lists verbs and presets") {
  const Result r = invoke({"info"});
  CHECK(r.code == 0);
  for (const char* word : {"run", "verify", "export", "DEEPJKO_OUT", "fokker-planck-kl", "porous-medium",
                           "nonlocal-mobility", "kalman-wasserstein", "--threads"}) {
    CHECK(r.out.find(word) != std::string::npos);
  }
}
