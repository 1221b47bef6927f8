#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <numeric>

#include "fixtures.hpp"
#include "rdbn/errors.hpp"
#include "rdbn/model.hpp"

using namespace rdbn;
using rdbn::testing::random_network;
using rdbn::testing::random_state;
using rdbn::testing::small_hp;

namespace {

// Dense N x N coefficient matrix for (t, l); entry [src][recv].
std::vector<std::vector<double>> dense(const LatentState& s,
                                       const std::vector<SupportPtr>& sup,
                                       const std::vector<std::vector<double>>& coef,
                                       std::int32_t t, std::int32_t l) {
  std::vector<std::vector<double>> d(s.N, std::vector<double>(s.N, 0.0));
  const auto& v = coef[s.slot(t, l)];
  if (v.empty()) return d;
  const SupportGraph& g = *sup[t];
  for (std::int32_t i = 0; i < s.N; ++i) {
    for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
      d[g.sources[e]][i] = v[e];
    }
  }
  return d;
}

std::vector<double> dense_psi(const LatentState& s, std::int32_t i,
                              std::int32_t t, std::int32_t l) {
  std::vector<double> psi(s.K, 0.0);
  if (l > 0) {
    const auto B = dense(s, s.beta_support, s.beta, t, l);
    for (std::int32_t src = 0; src < s.N; ++src) {
      for (std::int32_t k = 0; k < s.K; ++k) {
        psi[k] += B[src][i] * s.pi_at(t, l - 1, src)[k];
      }
    }
  }
  if (t > 0) {
    const auto G = dense(s, s.gamma_support, s.gamma, t, l);
    for (std::int32_t src = 0; src < s.N; ++src) {
      for (std::int32_t k = 0; k < s.K; ++k) {
        psi[k] += G[src][i] * s.pi_at(t - 1, l, src)[k];
      }
    }
  }
  return psi;
}

LatentState tiny_state(std::int32_t N, std::int32_t T, std::int32_t K,
                       std::int32_t L) {
  LatentState s(N, T, K, L, true);
  s.set_supports(
      std::vector<SupportPtr>(T, std::make_shared<SupportGraph>(SupportGraph::diagonal(N))),
      std::vector<SupportPtr>(T, std::make_shared<SupportGraph>(SupportGraph::empty(N))));
  for (std::size_t c = 0; c < s.pi.size(); c += K) {
    for (std::int32_t k = 0; k < K; ++k) s.pi[c + k] = 1.0 / K;
  }
  return s;
}

} // namespace

TEST_CASE("hyperparameter defaults and validation") {
  Hyperparams hp;
  const auto r = hp.resolved(73);
  CHECK(r.K == 10);
  CHECK(r.L == 3);
  CHECK(r.alpha == std::vector<double>(10, 0.1));
  CHECK(r.c_c == std::vector<double>(3, 1.0));
  CHECK(r.c_u == std::vector<double>(3, 1.0));
  CHECK(r.d_c == 1.0);
  CHECK(r.lambda1 == 1.0);
  CHECK(r.lambda0 == 1.0);
  CHECK(*r.m_shape == 73.0);
  CHECK_NOTHROW(r.validate());

  auto bad = r;
  bad.burn_in = bad.iterations;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = r;
  bad.K = 0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = r;
  bad.alpha[2] = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = r;
  bad.d_c = -1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("support graphs") {
  const std::vector<Dyad> links{{0, 2}, {1, 2}, {3, 0}};
  const auto g = SupportGraph::from_links(4, links, true);
  CHECK(g.row(2).size() == 3);
  CHECK(g.row(2)[0] == 2);  // diagonal first
  CHECK(g.contains(0, 2));
  CHECK(g.contains(1, 2));
  CHECK_FALSE(g.contains(2, 0));
  CHECK(g.contains(3, 0));
  const auto u = SupportGraph::from_links(4, links, false);
  CHECK(u.contains(2, 0));
  CHECK(u.contains(0, 2));
  CHECK(SupportGraph::diagonal(3).size() == 3);
  CHECK(SupportGraph::empty(3).size() == 0);
}

TEST_CASE("compute_psi") {
  SUBCASE("first cell is zero") {
    auto s = tiny_state(3, 2, 2, 2);
    CHECK(compute_psi(s, 0, 0, 0) == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("single contributor") {
    auto s = tiny_state(3, 1, 2, 2);
    s.beta[s.slot(0, 1)][1] = 2.0;  // diagonal of node 1
    const auto psi = compute_psi(s, 1, 0, 1);
    CHECK(psi[0] == doctest::Approx(1.0));
    CHECK(psi[1] == doctest::Approx(1.0));
  }
  SUBCASE("random instances match the dense double sum") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto net = random_network(6, 3, seed % 2 == 0, 0.3, seed);
      const TrainingView view(net);
      const auto s = random_state(view, 3, 3, seed);
      for (std::int32_t t = 0; t < 3; ++t) {
        for (std::int32_t l = 0; l < 3; ++l) {
          for (std::int32_t i = 0; i < 6; ++i) {
            const auto a = compute_psi(s, i, t, l);
            const auto b = dense_psi(s, i, t, l);
            for (std::int32_t k = 0; k < 3; ++k) {
              REQUIRE(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
            }
          }
        }
      }
    }
  }
  SUBCASE("linear in beta") {
    const auto net = random_network(5, 2, true, 0.4, 3);
    const TrainingView view(net);
    auto s = random_state(view, 2, 2, 9);
    auto only_beta = s;
    for (auto& g : only_beta.gamma) std::fill(g.begin(), g.end(), 0.0);
    const auto base = compute_psi(only_beta, 2, 1, 1);
    for (auto& b : only_beta.beta) for (double& v : b) v *= 2.0;
    const auto doubled = compute_psi(only_beta, 2, 1, 1);
    for (int k = 0; k < 2; ++k) CHECK(doubled[k] == 2.0 * base[k]);
  }
  SUBCASE("index errors") {
    auto s = tiny_state(3, 1, 2, 1);
    CHECK_THROWS_AS(compute_psi(s, 3, 0, 0), ParameterError);
    CHECK_THROWS_AS(compute_psi(s, 0, 1, 0), ParameterError);
    CHECK_THROWS_AS(compute_psi(s, 0, 0, 1), ParameterError);
  }
}

TEST_CASE("dirichlet_concentration") {
  const std::vector<double> psi{1.0, 1.0};
  const std::vector<double> alpha{0.1, 0.1};
  CHECK(dirichlet_concentration(psi, alpha, 0, 0) == std::vector<double>{1.1, 1.1});
  CHECK(dirichlet_concentration(psi, alpha, 1, 0) == std::vector<double>{1.0, 1.0});
  bool fallback = false;
  const std::vector<double> zero{0.0, 0.0, 0.0};
  const std::vector<double> alpha3{0.1, 0.1, 0.1};
  const auto f = dirichlet_concentration(zero, alpha3, 1, 2, &fallback);
  CHECK(fallback);
  for (double v : f) CHECK(v == doctest::Approx(1.0 / 3.0));
  dirichlet_concentration(psi, alpha, 1, 1, &fallback);
  CHECK_FALSE(fallback);
}

TEST_CASE("isolated nodes never hand the sampler a zero concentration") {
  // Node 5 has no links anywhere; with no alpha outside the first cell its
  // concentration would be zero if the diagonal were missing.
  const auto net = random_network(6, 3, true, 0.0, 1);
  const TrainingView view(net);
  const auto s = random_state(view, 3, 3, 2);
  for (std::int32_t t = 0; t < 3; ++t) {
    for (std::int32_t l = 0; l < 3; ++l) {
      if (t == 0 && l == 0) continue;
      const auto psi = compute_psi(s, 5, t, l);
      CHECK(std::accumulate(psi.begin(), psi.end(), 0.0) > 0.0);
    }
  }
  CHECK_NOTHROW(s.check_invariants(&view));
}

TEST_CASE("link_rate and link_prob") {
  LatentState s(2, 1, 1, 1, true);
  s.X = {2, 3};
  s.lambda = {0.1};
  CHECK(link_rate(s, 0, 1, 0) == doctest::Approx(0.6));
  CHECK(link_prob(0.6) == doctest::Approx(1.0 - std::exp(-0.6)));
  CHECK(link_prob(0.6) == doctest::Approx(0.45119).epsilon(1e-5));
  CHECK(link_prob(0.0) == 0.0);
  CHECK(link_prob(1e6) == 1.0);
  CHECK(link_prob(std::numeric_limits<double>::infinity()) == 1.0);
  CHECK_THROWS_AS(link_rate(s, 1, 1, 0), ParameterError);
  CHECK_THROWS_AS(link_prob(-1.0), ParameterError);

  s.X = {0, 3};
  CHECK(link_rate(s, 0, 1, 0) == 0.0);
  CHECK(link_prob(link_rate(s, 1, 0, 0)) == 0.0);

  SUBCASE("random instance matches the triple loop") {
    const auto net = random_network(7, 2, true, 0.3, 5);
    const TrainingView view(net);
    const auto r = random_state(view, 4, 2, 5);
    for (std::int32_t t = 0; t < 2; ++t) {
      for (std::int32_t i = 0; i < 7; ++i) {
        for (std::int32_t j = 0; j < 7; ++j) {
          if (i == j) continue;
          double oracle = 0.0;
          for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
              oracle += static_cast<double>(r.x_at(t, i)[a]) * r.lambda_at(a, b) *
                        static_cast<double>(r.x_at(t, j)[b]);
            }
          }
          REQUIRE(link_rate(r, i, j, t) == doctest::Approx(oracle).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("forward simulation") {
  SUBCASE("single layer, single step is a Dirichlet mixed-membership draw") {
    Hyperparams hp = small_hp(3, 1, 5.0);
    const auto sim = forward_simulate(hp, 8, 1, true, {}, 4);
    CHECK(sim.state.gamma_support[0]->size() == 0);
    for (const auto& g : sim.state.gamma) CHECK(g.empty());
    for (const auto& b : sim.state.beta) CHECK(b.empty());
    CHECK_NOTHROW(sim.state.check_invariants());
  }
  SUBCASE("T = 1 has no gamma anywhere") {
    Hyperparams hp = small_hp(2, 3, 5.0);
    const auto sim = forward_simulate(hp, 6, 1, true, {}, 4);
    for (const auto& g : sim.state.gamma) CHECK(g.empty());
    CHECK_FALSE(sim.state.beta[sim.state.slot(0, 1)].empty());
  }
  SUBCASE("links and counts agree") {
    Hyperparams hp = small_hp(3, 2, 8.0);
    for (bool directed : {true, false}) {
      const auto sim = forward_simulate(hp, 10, 3, directed, {}, 7);
      const TrainingView view(sim.network);
      CHECK_NOTHROW(sim.state.check_invariants(&view));
      for (std::int32_t t = 0; t < 3; ++t) {
        CHECK(sim.state.C[t].size() == view.links(t).size() * 9);
      }
    }
  }
  SUBCASE("supports follow the previous step's links") {
    Hyperparams hp = small_hp(2, 2, 8.0);
    const auto sim = forward_simulate(hp, 8, 3, true, {}, 3);
    for (std::int32_t t = 1; t < 3; ++t) {
      const auto expect = SupportGraph::from_links(8, sim.network.edges[t - 1], true);
      CHECK(sim.state.beta_support[t]->sources == expect.sources);
      CHECK(sim.state.gamma_support[t]->sources == expect.sources);
    }
    CHECK(sim.state.beta_support[0]->size() == 8);
  }
  SUBCASE("assortative compatibility gives assortative blocks") {
    Hyperparams hp = small_hp(3, 2);
    hp.m_shape.reset();
    std::vector<double> lambda(9, 0.01);
    for (int k = 0; k < 3; ++k) lambda[k * 3 + k] = 5.0;
    SimulationOptions opts;
    opts.lambda = lambda;
    opts.M = 1.0;
    const auto sim = forward_simulate(hp, 40, 5, true, opts, 11);
    // block of a node = the one community holding all its counts
    std::int64_t within = 0, within_pairs = 0, across = 0, across_pairs = 0;
    for (std::int32_t t = 0; t < 5; ++t) {
      std::vector<int> block(40, -1);
      for (std::int32_t i = 0; i < 40; ++i) {
        const auto x = sim.state.x_at(t, i);
        const auto top = std::max_element(x.begin(), x.end());
        if (*top == 0 || std::accumulate(x.begin(), x.end(), std::int64_t{0}) != *top) {
          continue;
        }
        block[i] = static_cast<int>(top - x.begin());
      }
      for (std::int32_t i = 0; i < 40; ++i) {
        for (std::int32_t j = 0; j < 40; ++j) {
          if (i == j || block[i] < 0 || block[j] < 0) continue;
          const bool link = sim.network.has_edge(t, i, j);
          if (block[i] == block[j]) {
            ++within_pairs;
            within += link;
          } else {
            ++across_pairs;
            across += link;
          }
        }
      }
    }
    const double rate_in = static_cast<double>(within) / within_pairs;
    const double rate_out = static_cast<double>(across) / across_pairs;
    CHECK(rate_in > 5.0 * rate_out);
  }
  SUBCASE("deterministic for a fixed seed") {
    Hyperparams hp = small_hp(2, 2, 6.0);
    const auto a = forward_simulate(hp, 7, 2, true, {}, 21);
    const auto b = forward_simulate(hp, 7, 2, true, {}, 21);
    CHECK(a.network.edges == b.network.edges);
    CHECK(a.state.pi == b.state.pi);
    CHECK(a.state.X == b.state.X);
  }
}

TEST_CASE("state invariants catch corruption") {
  const auto net = random_network(5, 2, true, 0.4, 1);
  const TrainingView view(net);
  const auto good = random_state(view, 2, 2, 1);
  CHECK_NOTHROW(good.check_invariants(&view));
  auto bad = good;
  bad.pi[0] += 0.1;
  CHECK_THROWS_AS(bad.check_invariants(), NumericalError);
  bad = good;
  bad.M = 0.0;
  CHECK_THROWS_AS(bad.check_invariants(), NumericalError);
  bad = good;
  bad.X[0] = -1;
  CHECK_THROWS_AS(bad.check_invariants(), NumericalError);
  bad = good;
  for (std::int32_t t = 0; t < 2; ++t) {
    if (!bad.C[t].empty()) {
      std::fill(bad.C[t].begin(), bad.C[t].begin() + 4, 0);
      break;
    }
  }
  CHECK_THROWS_AS(bad.check_invariants(&view), NumericalError);
}
