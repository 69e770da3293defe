#include <doctest.h>

#include <filesystem>
#include <string>

#include "deepjko/config.hpp"
#include "deepjko/error.hpp"
#include "deepjko/presets.hpp"

using namespace deepjko;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

std::string message_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("presets carry the published hyperparameters") {
  const JKOConfig fp = default_config("fokker-planck-kl");
  CHECK(fp.dt == 0.025);
  CHECK(fp.K == 20);
  CHECK(fp.width == 64);
  CHECK(fp.batch_size == 1000);
  CHECK(fp.lr == 1e-5);
  CHECK(fp.max_iterations == 10000);
  CHECK(fp.schedule.steps == 1);

  const JKOConfig pm = default_config("porous-medium");
  CHECK(pm.dt == 0.001);
  CHECK(pm.width == 128);
  CHECK(pm.schedule.steps == 2);
  CHECK(pm.K * pm.dt == doctest::Approx(0.12));

  for (const std::string& name : preset_names()) {
    JKOConfig c = default_config(name);
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(make_problem(c));
  }
  CHECK(code_of([] { default_config("heat"); }) == ErrorCode::Config);
}

TEST_CASE("parse fills defaults and round-trips") {
  const JKOConfig c = parse_config(R"({"preset": "porous-medium", "jko": {"K": 3}, "problem": {"dim": 6}})");
  CHECK(c.K == 3);
  CHECK(c.problem.dim == 6);
  CHECK(c.width == 128);
  const JKOConfig back = parse_config(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
}

TEST_CASE("resample_every accepts an integer or \"inf\"") {
  JKOConfig c = parse_config(R"({"preset": "fokker-planck-kl", "jko": {"resample_every": 50}})");
  REQUIRE(c.resample_every.has_value());
  CHECK(*c.resample_every == 50);
  apply_override(c, "jko.resample_every=inf");
  CHECK_FALSE(c.resample_every.has_value());
  CHECK(config_to_json(c).find("\"inf\"") != std::string::npos);
  CHECK(code_of([&] { apply_override(c, "jko.resample_every=never"); }) == ErrorCode::Config);
  CHECK(code_of([&] { apply_override(c, "jko.resample_every=0"); }) == ErrorCode::Config);
}

TEST_CASE("unknown keys are rejected by name") {
  const std::string msg = message_of([] { parse_config(R"({"preset": "fokker-planck-kl", "jko": {"steps": 3}})"); });
  CHECK(msg.find("jko.steps") != std::string::npos);
  CHECK(code_of([] { parse_config(R"({"preset": "fokker-planck-kl", "optimizer": {}})"); }) == ErrorCode::Config);

  JKOConfig c = default_config("fokker-planck-kl");
  const std::string om = message_of([&] { apply_override(c, "jko.bogus=1"); });
  CHECK(om.find("jko.bogus") != std::string::npos);
}

TEST_CASE("overrides") {
  JKOConfig c = default_config("kalman-wasserstein");
  apply_override(c, "jko.K=1");
  apply_override(c, "flow.integrator=rk4");
  apply_override(c, "jko.cache=false");
  apply_override(c, "net.init=zero");
  CHECK(c.K == 1);
  CHECK(c.schedule.integrator == Integrator::RK4);
  CHECK_FALSE(c.cache);
  CHECK(c.init == InitMode::Zero);

  CHECK(code_of([&] { apply_override(c, "preset=porous-medium"); }) == ErrorCode::Config);
  CHECK(code_of([&] { apply_override(c, "jko"); }) == ErrorCode::Config);
  CHECK(code_of([&] { apply_override(c, "jko=1"); }) == ErrorCode::Config);
  CHECK(code_of([&] { apply_override(c, "jko.K=-1"); }) == ErrorCode::Config);
  CHECK(code_of([&] { apply_override(c, "jko.K=ten"); }) == ErrorCode::Config);
  CHECK(code_of([&] { apply_override(c, "jko.dt=0"); }) == ErrorCode::Config);
  CHECK(code_of([&] { apply_override(c, "flow.integrator=leapfrog"); }) == ErrorCode::Config);
  // A failed override leaves the config as it was.
  CHECK(c.K == 1);
}

TEST_CASE("malformed documents") {
  CHECK(code_of([] { parse_config("{"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config("[]"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config(R"({"jko": {}})"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config(R"({"preset": "fokker-planck-kl", "jko": {"lr": "fast"}})"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_config(R"({"preset": "fokker-planck-kl", "net": {"layers": 1}})"); }) == ErrorCode::Config);
  CHECK(code_of([] { load_config("/nonexistent/config.json"); }) == ErrorCode::Io);
}

TEST_CASE("problem dimensions are checked per preset") {
  JKOConfig c = default_config("nonlocal-mobility");
  c.problem.dim = 3;
  CHECK(code_of([&] { make_problem(c); }) == ErrorCode::Config);
  JKOConfig f = default_config("fokker-planck-kl");
  f.problem.dim = 10;
  const Problem p = make_problem(f);
  CHECK(p.initial.dim == 10);
  REQUIRE(p.target.has_value());
  CHECK(p.target->centres.size() == 4);
}

TEST_CASE("every shipped preset file parses") {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(DEEPJKO_PRESET_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const JKOConfig c = load_config(entry.path());
    CHECK_NOTHROW(make_problem(c));
    ++n;
  }
  CHECK(n >= 10);
}
