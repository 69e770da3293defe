#include "deepjko/config.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepjko/error.hpp"
#include "deepjko/presets.hpp"

namespace deepjko {
namespace {

using Json = nlohmann::ordered_json;

Json to_json(const JKOConfig& c) {
  Json j;
  j["preset"] = c.preset;
  j["problem"] = {{"dim", c.problem.dim}, {"porous_exponent", c.problem.porous_exponent}, {"t0", c.problem.t0}};
  j["net"] = {{"layers", c.layers}, {"width", c.width}, {"init", to_string(c.init)}, {"fit_inputs", c.fit_inputs}};
  j["flow"] = {{"n_tau", c.schedule.steps}, {"integrator", to_string(c.schedule.integrator)}};
  Json jko;
  jko["dt"] = c.dt;
  jko["K"] = c.K;
  jko["lr"] = c.lr;
  jko["tol"] = c.tol;
  if (c.resample_every) {
    jko["resample_every"] = *c.resample_every;
  } else {
    jko["resample_every"] = "inf";
  }
  jko["batch_size"] = c.batch_size;
  jko["max_iterations"] = c.max_iterations;
  jko["seed"] = c.seed;
  jko["warm_start"] = c.warm_start;
  jko["cache"] = c.cache;
  j["jko"] = jko;
  return j;
}

template <class T>
T read(const Json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::Config, "config key '" + key + "' has the wrong type");
  }
}

std::size_t read_count(const Json& j, const std::string& key) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw Error(ErrorCode::Config, "config key '" + key + "' must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

InitMode parse_init(const std::string& s) {
  if (s == "unit-normal") return InitMode::UnitNormal;
  if (s == "scaled-normal") return InitMode::ScaledNormal;
  if (s == "zero") return InitMode::Zero;
  throw Error(ErrorCode::Config, "config key 'net.init' must be unit-normal, scaled-normal or zero");
}

Integrator parse_integrator(const std::string& s) {
  if (s == "euler") return Integrator::ForwardEuler;
  if (s == "rk4") return Integrator::RK4;
  throw Error(ErrorCode::Config, "config key 'flow.integrator' must be euler or rk4");
}

JKOConfig from_json(const Json& j) {
  JKOConfig c;
  c.preset = read<std::string>(j.at("preset"), "preset");
  const Json& pr = j.at("problem");
  c.problem.dim = read_count(pr.at("dim"), "problem.dim");
  c.problem.porous_exponent = read<double>(pr.at("porous_exponent"), "problem.porous_exponent");
  c.problem.t0 = read<double>(pr.at("t0"), "problem.t0");
  const Json& net = j.at("net");
  c.layers = read_count(net.at("layers"), "net.layers");
  c.width = read_count(net.at("width"), "net.width");
  c.init = parse_init(read<std::string>(net.at("init"), "net.init"));
  c.fit_inputs = read<bool>(net.at("fit_inputs"), "net.fit_inputs");
  const Json& flow = j.at("flow");
  c.schedule.steps = read_count(flow.at("n_tau"), "flow.n_tau");
  c.schedule.integrator = parse_integrator(read<std::string>(flow.at("integrator"), "flow.integrator"));
  const Json& jko = j.at("jko");
  c.dt = read<double>(jko.at("dt"), "jko.dt");
  c.K = read_count(jko.at("K"), "jko.K");
  c.lr = read<double>(jko.at("lr"), "jko.lr");
  c.tol = read<double>(jko.at("tol"), "jko.tol");
  const Json& re = jko.at("resample_every");
  if (re.is_string()) {
    if (re.get<std::string>() != "inf") throw Error(ErrorCode::Config, "config key 'jko.resample_every' must be an integer or \"inf\"");
    c.resample_every.reset();
  } else {
    c.resample_every = read_count(re, "jko.resample_every");
  }
  c.batch_size = read_count(jko.at("batch_size"), "jko.batch_size");
  c.max_iterations = read_count(jko.at("max_iterations"), "jko.max_iterations");
  c.seed = read<std::uint64_t>(jko.at("seed"), "jko.seed");
  c.warm_start = read<bool>(jko.at("warm_start"), "jko.warm_start");
  c.cache = read<bool>(jko.at("cache"), "jko.cache");
  c.validate();
  return c;
}

// Copies `src` into `dst`; every key in src must already exist in dst.
void overlay(Json& dst, const Json& src, const std::string& prefix) {
  if (!src.is_object()) throw Error(ErrorCode::Config, "config section '" + prefix + "' must be an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!dst.contains(it.key())) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    Json& target = dst[it.key()];
    if (target.is_object()) {
      overlay(target, it.value(), key);
    } else {
      target = it.value();
    }
  }
}

}  // namespace

std::string_view to_string(InitMode mode) {
  switch (mode) {
    case InitMode::UnitNormal: return "unit-normal";
    case InitMode::ScaledNormal: return "scaled-normal";
    case InitMode::Zero: return "zero";
  }
  return "scaled-normal";
}

std::string_view to_string(Integrator integrator) {
  return integrator == Integrator::RK4 ? "rk4" : "euler";
}

void JKOConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::Config, what); };
  if (!is_preset(preset)) fail("unknown preset '" + preset + "'");
  if (problem.dim == 0) fail("problem.dim must be at least 1");
  if (layers < 2) fail("net.layers must be at least 2");
  if (width == 0) fail("net.width must be at least 1");
  if (schedule.steps == 0) fail("flow.n_tau must be at least 1");
  if (!(dt > 0.0)) fail("jko.dt must be positive");
  if (K == 0) fail("jko.K must be at least 1");
  if (!(lr >= 0.0)) fail("jko.lr must be non-negative");
  if (!(tol > 0.0)) fail("jko.tol must be positive");
  if (resample_every && *resample_every == 0) fail("jko.resample_every must be at least 1 or \"inf\"");
  if (batch_size == 0) fail("jko.batch_size must be at least 1");
  if (max_iterations == 0) fail("jko.max_iterations must be at least 1");
}

JKOConfig parse_config(std::string_view json_text) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::Config, "config must be a JSON object");
  if (!doc.contains("preset") || !doc["preset"].is_string()) {
    throw Error(ErrorCode::Config, "config must name a preset");
  }
  Json full = to_json(default_config(doc["preset"].get<std::string>()));
  overlay(full, doc, "");
  return from_json(full);
}

JKOConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const JKOConfig& config) { return to_json(config).dump(2); }

void apply_override(JKOConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::Config, "override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));

  Json full = to_json(config);
  Json* node = &full;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) {
      throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    }
    node = &(*node)[part];
  }
  if (node->is_object()) throw Error(ErrorCode::Config, "config key '" + key + "' names a section, not a value");
  if (key == "preset") throw Error(ErrorCode::Config, "the preset cannot be overridden; use a different config");

  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  *node = value;
  config = from_json(full);
}

}  // namespace deepjko
