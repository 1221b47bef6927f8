#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "config.hpp"

using rdbn::cli::ConfigError;
using rdbn::cli::RunConfig;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return RunConfig::parse(in, "run.cfg");
}

std::string error_of(const std::string& text) {
  try {
    parse(text).hyperparams();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "no error";
}

} // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse(
      "# comment\n"
      "K = 4\n"
      "L=2\n"
      "alpha = 0.5\n"
      "c_u = 1, 2\n"
      "iterations = 20  # trailing comment\n"
      "burn_in = 10\n"
      "resample_dc = true\n"
      "\n");
  const auto hp = cfg.hyperparams();
  CHECK(hp.K == 4);
  CHECK(hp.L == 2);
  CHECK(hp.alpha == std::vector<double>(4, 0.5));
  CHECK(hp.c_u == std::vector<double>{1.0, 2.0});
  CHECK(hp.iterations == 20);
  CHECK(hp.resample_dc);
  CHECK(cfg.get_real("holdout", 0.1) == 0.1);
}

TEST_CASE("config errors name the key and line") {
  const auto unknown = error_of("K = 3\nbogus = 1\n");
  CHECK(unknown.find("run.cfg:2") != std::string::npos);
  CHECK(unknown.find("bogus") != std::string::npos);
  const auto bad = error_of("K = 3\nL = 2\niterations = ten\n");
  CHECK(bad.find("run.cfg:3") != std::string::npos);
  CHECK(bad.find("iterations") != std::string::npos);
  CHECK(error_of("K = 3\nK = 4\n").find("run.cfg:2") != std::string::npos);
  CHECK(error_of("K 3\n").find("run.cfg:1") != std::string::npos);
  CHECK(error_of("resample_dc = maybe\n").find("resample_dc") != std::string::npos);
  CHECK(error_of("K = 2\nalpha = 1,2,3\n").find("alpha") != std::string::npos);
}

TEST_CASE("flags win over the file") {
  auto cfg = parse("K = 3\nseed = 5\n");
  cfg.set("K", "6");
  CHECK(cfg.hyperparams().K == 6);
  CHECK(cfg.hyperparams().seed == 5);
  CHECK_THROWS_AS(cfg.set("nope", "1"), ConfigError);
  cfg.set("seed", "x");
  CHECK_THROWS_WITH(cfg.hyperparams(), doctest::Contains("flag"));
}

TEST_CASE("every documented key is known") {
  const auto& keys = RunConfig::known_keys();
  for (const char* k : {"K", "L", "alpha", "iterations", "burn_in", "holdout",
                        "seed", "threads", "checkpoint_every", "input", "out"}) {
    CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
  }
}
