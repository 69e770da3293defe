#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "deepjko/flow.hpp"
#include "deepjko/potential_net.hpp"

namespace deepjko {

struct ProblemConfig {
  std::size_t dim = 2;
  double porous_exponent = 2.0;  // porous-medium only
  double t0 = 1e-3;              // Barenblatt time shift
};

struct JKOConfig {
  std::string preset;
  ProblemConfig problem;

  std::size_t layers = 3;  // L
  std::size_t width = 64;  // m
  InitMode init = InitMode::ScaledNormal;
  bool fit_inputs = false;  // centre and scale W₀, b₀ on the ensemble at each fresh init

  InnerSchedule schedule;

  double dt = 0.025;
  std::size_t K = 20;
  double lr = 1e-5;
  double tol = 1e-9;
  std::optional<std::size_t> resample_every;  // empty means never (C = ∞)
  std::size_t batch_size = 1000;
  std::size_t max_iterations = 10000;
  std::uint64_t seed = 0;
  bool warm_start = true;
  bool cache = true;

  void validate() const;
};

// Reads a config document. Keys absent from the document take the preset's
// defaults; unknown keys are errors.
JKOConfig parse_config(std::string_view json_text);
JKOConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const JKOConfig& config);

// Dotted-key override such as "jko.K=1". The key must already exist.
void apply_override(JKOConfig& config, std::string_view assignment);

std::string_view to_string(InitMode mode);
std::string_view to_string(Integrator integrator);

}  // namespace deepjko
