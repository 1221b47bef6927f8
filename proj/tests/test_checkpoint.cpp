#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "rdbn/checkpoint.hpp"
#include "rdbn/errors.hpp"

using namespace rdbn;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rdbn_test_checkpoint_" + name);
  std::filesystem::remove_all(p);
  return p;
}

Checkpoint sample_checkpoint(bool directed) {
  const auto net = testing::random_network(7, 3, directed, 0.3, 2);
  const auto split = split_holdout(net, 0.2, 2);
  Hyperparams hp = testing::small_hp(3, 2);
  hp.alpha = {0.1, 0.2, 0.3};
  hp.c_u = {1.0, 0.5};
  GibbsSampler sampler(hp, 2);
  Checkpoint c;
  c.hp = hp;
  c.iteration = 4;
  c.state = sampler.initialise(split.training);
  for (int it = 1; it <= 4; ++it) sampler.iterate(c.state, split.training, it);
  c.posterior.add(c.state, split.mask);
  c.posterior.add(c.state, split.mask);
  c.counters.rate_floor_hits = 3;
  c.counters.window_expansions = 5;
  return c;
}

} // namespace

TEST_CASE("checkpoint round trip is exact") {
  for (bool directed : {true, false}) {
    const auto c = sample_checkpoint(directed);
    const auto dir = temp_dir(directed ? "d" : "u");
    save_checkpoint(dir, c);
    const auto back = load_checkpoint(dir);
    CHECK(back.iteration == 4);
    CHECK(back.hp.alpha == c.hp.alpha);
    CHECK(back.hp.c_u == c.hp.c_u);
    CHECK(*back.hp.m_shape == *c.hp.m_shape);
    CHECK(back.hp.seed == c.hp.seed);
    CHECK(back.state.directed == directed);
    CHECK(back.state.pi == c.state.pi);
    CHECK(back.state.beta == c.state.beta);
    CHECK(back.state.gamma == c.state.gamma);
    CHECK(back.state.X == c.state.X);
    CHECK(back.state.C == c.state.C);
    CHECK(back.state.lambda == c.state.lambda);
    CHECK(back.state.M == c.state.M);
    for (int t = 0; t < 3; ++t) {
      CHECK(back.state.beta_support[t]->sources == c.state.beta_support[t]->sources);
      CHECK(back.state.gamma_support[t]->offsets == c.state.gamma_support[t]->offsets);
    }
    CHECK(back.posterior.survival_sum == c.posterior.survival_sum);
    CHECK(back.posterior.n_samples == 2);
    CHECK(back.counters.rate_floor_hits == 3);
    CHECK(back.counters.window_expansions == 5);

    // saving over an existing bundle replaces it
    auto later = c;
    later.iteration = 8;
    save_checkpoint(dir, later);
    CHECK(load_checkpoint(dir).iteration == 8);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir.string() + ".old");
  }
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto c = sample_checkpoint(true);
  const auto dir = temp_dir("bad");
  CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  save_checkpoint(dir, c);

  SUBCASE("missing file") {
    std::filesystem::remove(dir / "X.csv");
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  }
  SUBCASE("wrong format tag") {
    std::ofstream(dir / "manifest.txt", std::ios::app) << "";
    std::ifstream in(dir / "manifest.txt");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = text.find("rdbn-checkpoint-1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 17, "rdbn-checkpoint-9");
    std::ofstream(dir / "manifest.txt") << text;
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  }
  SUBCASE("corrupted memberships fail the invariants") {
    std::ifstream in(dir / "pi.csv");
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    std::string rest((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto cut = first.rfind(',');
    first = first.substr(0, cut + 1) + "5";
    std::ofstream(dir / "pi.csv") << header << '\n' << first << '\n' << rest;
    CHECK_THROWS(load_checkpoint(dir));
  }
  std::filesystem::remove_all(dir);
}
