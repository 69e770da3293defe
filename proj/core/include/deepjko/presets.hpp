#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepjko/config.hpp"
#include "deepjko/energy.hpp"
#include "deepjko/problems.hpp"

namespace deepjko {

// A preset bound to concrete densities and energy terms.
struct Problem {
  std::string name;
  EnergyFunctional functional;
  Distribution initial;
  std::optional<Distribution> target;  // q for the KL presets
  std::optional<BarenblattParams> barenblatt;
  std::optional<BayesSetup> bayes;
};

const std::vector<std::string>& preset_names();
bool is_preset(std::string_view name);

// Full-scale default hyperparameters for a preset.
JKOConfig default_config(std::string_view preset);

Problem make_problem(const JKOConfig& config);

}  // namespace deepjko
