#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepjko/config.hpp"
#include "deepjko/error.hpp"
#include "deepjko/jko.hpp"
#include "deepjko/presets.hpp"
#include "export.hpp"
#include "verify.hpp"

namespace deepjko::cli {
namespace {

constexpr const char* kOutEnv = "DEEPJKO_OUT";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::filesystem::path resolve_out(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return fallback;
}

struct RunArgs {
  std::string config_flag;
  std::string config_pos;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::size_t threads = 1;
  bool quiet = false;
};

int do_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.config_flag.empty() && !a.config_pos.empty()) throw UsageError("give the config either positionally or with --config");
  const std::string path = a.config_flag.empty() ? a.config_pos : a.config_flag;
  if (path.empty()) throw UsageError("run needs a config file");
  if (a.threads == 0) throw UsageError("--threads must be at least 1");

  JKOConfig config = load_config(path);
  for (const std::string& s : a.sets) apply_override(config, s);
  if (a.seed) apply_override(config, "jko.seed=" + std::to_string(*a.seed));

  const std::filesystem::path dir = resolve_out(a.out, "runs/" + config.preset);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

  const Problem problem = make_problem(config);
  RunOptions opts;
  opts.out_dir = dir;
  opts.log = a.quiet ? nullptr : &err;
  run(config, problem, opts);
  out << dir.string() << '\n';
  return 0;
}

int do_verify(const std::string& suite, const VerifyOptions& vo, std::ostream& out) {
  const std::vector<Check> checks = run_suite(suite, vo);
  bool all = true;
  for (const Check& c : checks) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e (tol %.1e)", c.measured, c.tolerance);
    out << (c.pass ? "PASS " : "FAIL ") << suite << ": " << c.name << " = " << buf << '\n';
    all = all && c.pass;
  }
  return all ? 0 : 1;
}

int do_export(const std::string& run_dir, const std::string& what, const std::string& out_flag, std::ostream& out) {
  const std::filesystem::path dest = out_flag.empty() ? std::filesystem::path(run_dir) / "export" : std::filesystem::path(out_flag);
  for (const auto& p : export_run(run_dir, what, dest)) out << p.string() << '\n';
  return 0;
}

void print_info(std::ostream& out) {
  out << "deepjko: particle solver for Wasserstein gradient flows via JKO steps\n\n"
         "verbs\n"
         "  run [CONFIG]            train all outer steps, write snapshots, checkpoints, manifest.json\n"
         "  verify SUITE            oracle checks; suites:";
  for (const auto& s : suite_names()) out << ' ' << s;
  out << "\n  export RUN_DIR [WHAT]   tidy CSVs for plotting; WHAT is one of";
  for (const auto& s : export_kinds()) out << ' ' << s;
  out << " all\n"
         "  info                    this text\n\n"
         "flags\n"
         "  --config PATH           config JSON (run)\n"
         "  --out DIR               output directory (run, export)\n"
         "  --seed N                shorthand for --set jko.seed=N\n"
         "  --set KEY=VALUE         override a config key, repeatable (alias --overrides)\n"
         "  --threads N             accepted for compatibility; training runs on one thread\n"
         "  --d N, --ntau N         dimension and inner steps for verify jacobi\n"
         "  --cases N               random cases for verify grad/hessian\n\n"
         "environment\n"
         "  "
      << kOutEnv
      << "             run output directory when --out is not given (default runs/<preset>)\n\n"
         "presets\n";
  for (const auto& p : preset_names()) out << "  " << p << '\n';
  out << "\nconfig keys (defaults for fokker-planck-kl)\n";
  out << config_to_json(default_config("fokker-planck-kl")) << '\n';
  out << "\nerror codes\n ";
  for (int c = 0; c <= static_cast<int>(ErrorCode::MissingCheckpoint); ++c) {
    out << ' ' << to_string(static_cast<ErrorCode>(c));
  }
  out << " usage\n\nexit status: 0 ok, 1 verify check failed, 2 usage, 3 runtime error\n";
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"deepjko"};
  app.require_subcommand(1);
  app.set_help_flag("-h,--help");

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "train a preset and write snapshots");
  run_cmd->add_option("path", ra.config_pos, "config JSON (same as --config)");
  run_cmd->add_option("--config", ra.config_flag, "config JSON");
  run_cmd->add_option("--out", ra.out, "output directory");
  run_cmd->add_option("--seed", ra.seed, "RNG seed");
  run_cmd->add_option("--set,--overrides", ra.sets, "key=value override")->allow_extra_args(false);
  run_cmd->add_option("--threads", ra.threads, "thread count");
  run_cmd->add_flag("-q,--quiet", ra.quiet, "no progress log");

  std::string suite;
  VerifyOptions vo;
  auto* verify_cmd = app.add_subcommand("verify", "run an oracle suite");
  verify_cmd->add_option("suite", suite, "suite name")->required();
  verify_cmd->add_option("--d", vo.dim, "dimension (jacobi)");
  verify_cmd->add_option("--ntau", vo.ntau, "inner steps (jacobi)");
  verify_cmd->add_option("--cases", vo.cases, "random cases (grad, hessian)");
  verify_cmd->add_option("--seed", vo.seed, "RNG seed");

  std::string run_dir, what = "all", export_out;
  auto* export_cmd = app.add_subcommand("export", "write plotting CSVs from a run directory");
  export_cmd->add_option("run-dir", run_dir, "run directory")->required();
  export_cmd->add_option("what", what, "energy, loss, trajectories or all");
  export_cmd->add_option("--out", export_out, "destination directory (default RUN_DIR/export)");

  auto* info_cmd = app.add_subcommand("info", "describe verbs, flags, presets and config keys");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      throw UsageError(e.what());
    }
    if (*run_cmd) return do_run(ra, out, err);
    if (*verify_cmd) {
      const auto& names = suite_names();
      if (std::find(names.begin(), names.end(), suite) == names.end()) throw UsageError("unknown verify suite '" + suite + "'");
      return do_verify(suite, vo, out);
    }
    if (*export_cmd) return do_export(run_dir, what, export_out, out);
    if (*info_cmd) {
      print_info(out);
      return 0;
    }
    throw UsageError("no verb given");
  } catch (const UsageError& e) {
    err << "error[usage]: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error[" << to_string(e.code()) << "]: " << one_line(e.what()) << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error[internal]: " << one_line(e.what()) << '\n';
    return 3;
  }
}

}  // namespace deepjko::cli
