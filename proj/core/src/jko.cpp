#include "deepjko/jko.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "deepjko/error.hpp"
#include "deepjko/problems.hpp"

namespace deepjko {
namespace {

using Json = nlohmann::ordered_json;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

bool is_divergence(const Error& e) {
  return e.code() == ErrorCode::NonFinite || e.code() == ErrorCode::Domain || e.code() == ErrorCode::Divergence;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::Format, "snapshot: bad number '" + s + "'");
  }
  if (used != s.size()) throw Error(ErrorCode::Format, "snapshot: bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct StepOutcome {
  ResNetPotential net;
  std::vector<double> losses;
  bool converged = false;
};

class Driver {
 public:
  Driver(const JKOConfig& config, const Problem& problem, const RunOptions& options)
      : cfg_(config), problem_(problem), options_(options), resample_rng_(stream(config.seed, 3)) {}

  RunResult run() {
    cfg_.validate();
    std::mt19937_64 sample_rng = stream(cfg_.seed, 1);
    std::mt19937_64 init_rng = stream(cfg_.seed, 2);
    if (options_.out_dir) std::filesystem::create_directories(*options_.out_dir / "checkpoints");

    ParticleEnsemble tracked = sample_ensemble(problem_.initial, cfg_.batch_size, sample_rng);
    RunResult result;
    result.snapshots.push_back(make_snapshot(tracked, {}));
    emit(result.snapshots.back());

    auto fresh = [&] {
      ResNetPotential net = ResNetPotential::random(problem_.initial.dim, cfg_.width, cfg_.layers, cfg_.init, init_rng);
      if (cfg_.fit_inputs) {
        const auto x = tracked.positions.as_matrix();
        const Eigen::RowVectorXd mean = x.colwise().mean();
        const Eigen::RowVectorXd sd = ((x.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
        fit_inputs(net, mean.transpose(), sd.transpose().cwiseMax(1e-12));
      }
      return net;
    };
    ResNetPotential theta = fresh();
    for (std::size_t n = 1; n <= cfg_.K; ++n) {
      if (n > 1) theta = cfg_.warm_start ? result.nets.back() : fresh();
      double lr = cfg_.lr;
      StepOutcome out;
      for (int attempt = 0;; ++attempt) {
        try {
          out = train(theta, tracked, result.nets, lr);
          break;
        } catch (const Error& e) {
          if (!is_divergence(e)) throw;
          if (attempt > 0) {
            throw Error(ErrorCode::Divergence, "step " + std::to_string(n) + " diverged twice (" + e.what() + ")");
          }
          log("step " + std::to_string(n) + ": " + e.what() + "; retrying with lr " + fmt(0.5 * lr));
          lr *= 0.5;
        }
      }
      result.nets.push_back(out.net);
      tracked = integrate(out.net, cfg_.schedule, std::move(tracked));
      tracked.step = n;

      Snapshot snap = make_snapshot(tracked, std::move(out.losses));
      snap.converged = out.converged;
      snap.lr = lr;
      if (options_.out_dir) {
        snap.checkpoint = "checkpoints/" + checkpoint_filename(n);
        save_checkpoint(out.net, *options_.out_dir / snap.checkpoint);
      }
      result.snapshots.push_back(std::move(snap));
      emit(result.snapshots.back());
    }
    if (options_.out_dir) {
      std::ofstream m(*options_.out_dir / "manifest.json", std::ios::trunc);
      if (!m) throw Error(ErrorCode::Io, "cannot write manifest in " + options_.out_dir->string());
      m << manifest_json(cfg_, problem_, result) << '\n';
    }
    return result;
  }

 private:
  Snapshot make_snapshot(const ParticleEnsemble& e, std::vector<double> losses) {
    Snapshot s;
    s.step = e.step;
    s.t = static_cast<double>(e.step) * cfg_.dt;
    s.ensemble = e;
    const EnergyEstimate est = diagnostic_energy(problem_.functional, e);
    s.energy = est.value;
    s.energy_std = est.std;
    s.iterations = losses.size();
    s.losses = std::move(losses);
    return s;
  }

  void emit(const Snapshot& s) {
    if (options_.out_dir) save_snapshot(s, *options_.out_dir / snapshot_filename(s.step));
    std::string line = "step " + std::to_string(s.step) + " t=" + fmt(s.t) + " energy=" + fmt(s.energy);
    if (s.step > 0) {
      line += " iterations=" + std::to_string(s.iterations) + (s.converged ? " (tol)" : "");
      if (!s.losses.empty()) line += " loss=" + fmt(s.losses.back());
    }
    log(line);
    if (options_.on_step) options_.on_step(s);
  }

  void log(const std::string& line) {
    if (options_.log) *options_.log << line << std::endl;
  }

  StepOutcome train(const ResNetPotential& theta0, const ParticleEnsemble& tracked,
                    const std::vector<ResNetPotential>& previous, double lr) {
    StepOutcome out;
    ResNetPotential net = theta0;
    out.net = net;
    AdamState adam;
    LossOptions opts;
    opts.dt = cfg_.dt;
    opts.schedule = cfg_.schedule;

    // Losses on different batches are not comparable, so the best iterate is
    // only tracked while the batch stays fixed; otherwise the last one is kept.
    const bool fixed_batch = !cfg_.resample_every || *cfg_.resample_every >= cfg_.max_iterations;
    double best = std::numeric_limits<double>::infinity();
    double prev = 0.0;
    ParticleEnsemble batch;
    for (std::size_t c = 0; c < cfg_.max_iterations; ++c) {
      if (cfg_.resample_every ? c % *cfg_.resample_every == 0 : c == 0) {
        batch = (!cfg_.resample_every && cfg_.cache) ? tracked : resample(cfg_, problem_, previous, resample_rng_);
      }
      TapedLoss loss = batch_loss(net, problem_.functional, batch, opts);
      if (!std::isfinite(loss.value)) throw Error(ErrorCode::Divergence, "loss became non-finite");
      out.losses.push_back(loss.value);
      if (!fixed_batch || loss.value < best) {
        best = loss.value;
        out.net = net;
      }
      if (c > 0 && stopping_error(prev, loss.value) < cfg_.tol) {
        out.converged = true;
        break;
      }
      prev = loss.value;
      const ad::Gradients grads = loss.tape.backward(loss.output);
      for (const auto& [id, g] : grads) require_finite(g, "parameter gradient");
      const std::vector<ad::Tensor*> params = net.parameters();
      adam_step(adam, params, grads, lr);
    }
    return out;
  }

  const JKOConfig& cfg_;
  const Problem& problem_;
  const RunOptions& options_;
  std::mt19937_64 resample_rng_;
};

}  // namespace

void adam_step(AdamState& s, std::span<ad::Tensor* const> params, const ad::Gradients& grads, double lr) {
  if (s.m.empty()) {
    for (const ad::Tensor* p : params) {
      s.m.push_back(ad::Tensor::zeros_like(*p));
      s.v.push_back(ad::Tensor::zeros_like(*p));
    }
  }
  if (s.m.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "adam: parameter count changed");
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor& p = *params[i];
    if (!p.same_shape(s.m[i])) throw Error(ErrorCode::ShapeMismatch, "adam: parameter shape changed");
    const auto it = grads.find(i);
    if (it != grads.end() && !it->second.same_shape(p)) {
      throw Error(ErrorCode::ShapeMismatch, "adam: gradient shape does not match parameter " + std::to_string(i));
    }
    auto m = s.m[i].as_matrix().array();
    auto v = s.v[i].as_matrix().array();
    if (it != grads.end()) {
      const auto g = it->second.as_matrix().array();
      m = s.beta1 * m + (1.0 - s.beta1) * g;
      v = s.beta2 * v + (1.0 - s.beta2) * g * g;
    } else {
      m = s.beta1 * m;
      v = s.beta2 * v;
    }
    p.as_matrix().array() -= lr * (m / c1) / ((v / c2).sqrt() + s.eps);
  }
}

double stopping_error(double loss_prev, double loss_curr) {
  if (loss_prev == 0.0) return std::abs(loss_curr);
  return std::abs(loss_curr - loss_prev) / std::abs(loss_prev);
}

ParticleEnsemble resample(const JKOConfig& config, const Problem& problem,
                          std::span<const ResNetPotential> checkpoints, std::mt19937_64& rng) {
  ParticleEnsemble fresh = sample_ensemble(problem.initial, config.batch_size, rng);
  ParticleEnsemble out = replay(checkpoints, config.schedule, std::move(fresh));
  out.step = checkpoints.size();
  return out;
}

RunResult run(const JKOConfig& config, const RunOptions& options) {
  const Problem problem = make_problem(config);
  return run(config, problem, options);
}

RunResult run(const JKOConfig& config, const Problem& problem, const RunOptions& options) {
  return Driver(config, problem, options).run();
}

std::string snapshot_filename(std::size_t step) {
  if (step == 0) return "initial.csv";
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%04zu.csv", step);
  return buf;
}

std::string checkpoint_filename(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phi_%04zu.bin", step);
  return buf;
}

void write_snapshot(const Snapshot& s, std::ostream& out) {
  s.ensemble.validate();
  const std::size_t d = s.ensemble.dim();
  out << "step,t,id";
  for (std::size_t i = 0; i < d; ++i) out << ",x" << i;
  out << ",logdet,density\n";
  const std::string head = std::to_string(s.step) + "," + fmt(s.t) + ",";
  for (std::size_t j = 0; j < s.ensemble.size(); ++j) {
    out << head << j;
    for (std::size_t i = 0; i < d; ++i) out << ',' << fmt(s.ensemble.positions(j, i));
    out << ',' << fmt(s.ensemble.logdets[j]) << ',' << fmt(s.ensemble.densities[j]) << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "snapshot: write failed");
}

Snapshot read_snapshot(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Format, "snapshot: empty file");
  const std::vector<std::string> header = split(line);
  if (header.size() < 6 || header[0] != "step" || header[1] != "t" || header[2] != "id" ||
      header[header.size() - 2] != "logdet" || header.back() != "density") {
    throw Error(ErrorCode::Format, "snapshot: unexpected header");
  }
  const std::size_t d = header.size() - 5;
  for (std::size_t i = 0; i < d; ++i) {
    if (header[3 + i] != "x" + std::to_string(i)) throw Error(ErrorCode::Format, "snapshot: unexpected header");
  }

  Snapshot s;
  std::vector<double> pos;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::Format, "snapshot: row " + std::to_string(row) + " has " +
                                         std::to_string(cells.size()) + " fields, expected " +
                                         std::to_string(header.size()));
    }
    const auto step = static_cast<std::size_t>(parse_double(cells[0]));
    const double t = parse_double(cells[1]);
    if (row == 0) {
      s.step = step;
      s.t = t;
    } else if (step != s.step || t != s.t) {
      throw Error(ErrorCode::Format, "snapshot: rows disagree on step/t");
    }
    if (parse_double(cells[2]) != static_cast<double>(row)) throw Error(ErrorCode::Format, "snapshot: ids out of order");
    for (std::size_t i = 0; i < d; ++i) pos.push_back(parse_double(cells[3 + i]));
    s.ensemble.logdets.push_back(parse_double(cells[3 + d]));
    s.ensemble.densities.push_back(parse_double(cells[4 + d]));
    ++row;
  }
  if (row == 0) throw Error(ErrorCode::Format, "snapshot: no particles");
  s.ensemble.step = s.step;
  s.ensemble.positions = ad::Tensor({row, d}, std::move(pos));
  s.ensemble.validate();
  return s;
}

void save_snapshot(const Snapshot& snapshot, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_snapshot(snapshot, out);
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return read_snapshot(in);
}

std::string manifest_json(const JKOConfig& config, const Problem& problem, const RunResult& result) {
  Json j;
  j["format"] = "deepjko-run";
  j["version"] = 1;
  j["config"] = Json::parse(config_to_json(config));
  j["dim"] = problem.initial.dim;
  j["particles"] = config.batch_size;
  Json steps = Json::array();
  for (const Snapshot& s : result.snapshots) {
    Json e;
    e["step"] = s.step;
    e["t"] = s.t;
    e["energy"] = s.energy;
    e["energy_std"] = s.energy_std;
    e["snapshot"] = snapshot_filename(s.step);
    if (s.step > 0) {
      e["checkpoint"] = s.checkpoint;
      e["iterations"] = s.iterations;
      e["converged"] = s.converged;
      e["lr"] = s.lr;
      e["loss"] = s.losses;
    }
    if (problem.barenblatt) e["support_radius"] = barenblatt_support_radius(*problem.barenblatt, s.t);
    steps.push_back(std::move(e));
  }
  j["steps"] = std::move(steps);
  if (problem.barenblatt) {
    const BarenblattParams& b = *problem.barenblatt;
    j["barenblatt"] = {{"dim", b.dim}, {"m", b.m}, {"t0", b.t0}, {"alpha", b.alpha}, {"beta", b.beta}, {"C", b.C}};
  }
  if (problem.bayes) {
    const Eigen::Vector2d argmin =
        phi_grid_argmin(*problem.bayes, Eigen::Vector2d(-5.0, 90.0), Eigen::Vector2d(0.0, 115.0), 1001);
    j["bayes"] = {{"y", {problem.bayes->y[0], problem.bayes->y[1]}}, {"grid_argmin", {argmin[0], argmin[1]}}};
  }
  return j.dump(2);
}

RunRecord load_run(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorCode::Io, "no manifest.json in " + dir.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("manifest: ") + e.what());
  }
  if (j.value("format", "") != "deepjko-run" || j.value("version", 0) != 1) {
    throw Error(ErrorCode::Format, "manifest: unsupported format or version");
  }
  RunRecord rec;
  rec.config = parse_config(j.at("config").dump());
  try {
    for (const Json& e : j.at("steps")) {
      Snapshot s = load_snapshot(dir / e.at("snapshot").get<std::string>());
      if (s.step != e.at("step").get<std::size_t>()) throw Error(ErrorCode::Format, "manifest: step mismatch");
      s.energy = e.at("energy").get<double>();
      s.energy_std = e.at("energy_std").get<double>();
      if (e.contains("loss")) s.losses = e.at("loss").get<std::vector<double>>();
      s.iterations = e.value("iterations", std::size_t{0});
      s.converged = e.value("converged", false);
      s.lr = e.value("lr", 0.0);
      s.checkpoint = e.value("checkpoint", std::string());
      rec.snapshots.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("manifest: ") + e.what());
  }
  return rec;
}

}  // namespace deepjko
