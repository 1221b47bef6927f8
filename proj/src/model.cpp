#include "rdbn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rdbn/errors.hpp"

namespace rdbn {

Hyperparams Hyperparams::resolved(std::int32_t n_nodes) const {
  Hyperparams hp = *this;
  if (hp.alpha.empty() && hp.K > 0) hp.alpha.assign(hp.K, 0.1);
  if (hp.c_c.empty() && hp.L > 0) hp.c_c.assign(hp.L, 1.0);
  if (hp.c_u.empty() && hp.L > 0) hp.c_u.assign(hp.L, 1.0);
  if (!hp.m_shape) hp.m_shape = static_cast<double>(n_nodes);
  return hp;
}

void Hyperparams::validate() const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (K < 1) throw ParameterError("K must be at least 1");
  if (L < 1) throw ParameterError("L must be at least 1");
  if (static_cast<std::int32_t>(alpha.size()) != K) {
    throw ParameterError("alpha must have K entries");
  }
  if (!std::all_of(alpha.begin(), alpha.end(), positive)) {
    throw ParameterError("alpha entries must be positive");
  }
  if (static_cast<std::int32_t>(c_c.size()) != L ||
      static_cast<std::int32_t>(c_u.size()) != L) {
    throw ParameterError("c_c and c_u must have L entries");
  }
  if (!std::all_of(c_c.begin(), c_c.end(), positive) ||
      !std::all_of(c_u.begin(), c_u.end(), positive)) {
    throw ParameterError("c_c and c_u entries must be positive");
  }
  if (!positive(d_c) || !positive(lambda1) || !positive(lambda0)) {
    throw ParameterError("d_c, lambda1 and lambda0 must be positive");
  }
  if (!m_shape || !positive(*m_shape)) {
    throw ParameterError("m_shape must be positive");
  }
  if (iterations < 1 || burn_in < 0 || burn_in >= iterations) {
    throw ParameterError("need iterations >= 1 and 0 <= burn_in < iterations");
  }
}

SupportGraph SupportGraph::empty(std::int32_t n_nodes) {
  SupportGraph g;
  g.n_nodes = n_nodes;
  g.offsets.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
  return g;
}

SupportGraph SupportGraph::diagonal(std::int32_t n_nodes) {
  SupportGraph g;
  g.n_nodes = n_nodes;
  g.offsets.resize(static_cast<std::size_t>(n_nodes) + 1);
  std::iota(g.offsets.begin(), g.offsets.end(), 0);
  g.sources.resize(n_nodes);
  std::iota(g.sources.begin(), g.sources.end(), 0);
  return g;
}

SupportGraph SupportGraph::from_links(std::int32_t n_nodes,
                                      std::span<const Dyad> links,
                                      bool directed) {
  std::vector<std::vector<std::int32_t>> incoming(n_nodes);
  for (const Dyad& d : links) {
    incoming[d.j].push_back(d.i);
    if (!directed) incoming[d.i].push_back(d.j);
  }
  SupportGraph g;
  g.n_nodes = n_nodes;
  g.offsets.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
  for (std::int32_t i = 0; i < n_nodes; ++i) {
    auto& row = incoming[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.sources.push_back(i);
    for (std::int32_t s : row) {
      if (s != i) g.sources.push_back(s);
    }
    g.offsets[i + 1] = static_cast<std::int64_t>(g.sources.size());
  }
  return g;
}

bool SupportGraph::contains(std::int32_t source, std::int32_t receiver) const {
  const auto r = row(receiver);
  return std::find(r.begin(), r.end(), source) != r.end();
}

LatentState::LatentState(std::int32_t n_nodes, std::int32_t n_steps,
                         std::int32_t K_, std::int32_t L_, bool directed_)
    : N(n_nodes), T(n_steps), K(K_), L(L_), directed(directed_) {
  pi.assign(static_cast<std::size_t>(T) * L * N * K, 0.0);
  X.assign(static_cast<std::size_t>(T) * N * K, 0);
  C.assign(T, {});
  lambda.assign(static_cast<std::size_t>(K) * K, 1.0);
  beta.assign(static_cast<std::size_t>(T) * L, {});
  gamma.assign(static_cast<std::size_t>(T) * L, {});
}

void LatentState::set_supports(std::vector<SupportPtr> beta_sup,
                               std::vector<SupportPtr> gamma_sup) {
  if (static_cast<std::int32_t>(beta_sup.size()) != T ||
      static_cast<std::int32_t>(gamma_sup.size()) != T) {
    throw ParameterError("one support graph per time step required");
  }
  beta_support = std::move(beta_sup);
  gamma_support = std::move(gamma_sup);
  for (std::int32_t t = 0; t < T; ++t) {
    if (!beta_support[t] || !gamma_support[t] ||
        beta_support[t]->n_nodes != N || gamma_support[t]->n_nodes != N) {
      throw ParameterError("support graph size mismatch");
    }
    for (std::int32_t l = 0; l < L; ++l) {
      beta[slot(t, l)].assign(l > 0 ? beta_support[t]->size() : 0, 0.0);
      gamma[slot(t, l)].assign(t > 0 ? gamma_support[t]->size() : 0, 0.0);
    }
  }
}

void LatentState::check_invariants(const TrainingView* view) const {
  auto fail = [](const std::string& what) {
    throw NumericalError("state invariant violated: " + what);
  };
  for (std::int32_t t = 0; t < T; ++t) {
    for (std::int32_t l = 0; l < L; ++l) {
      for (std::int32_t i = 0; i < N; ++i) {
        double sum = 0.0;
        for (double p : pi_at(t, l, i)) {
          if (!(p >= 0.0)) fail("negative membership");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
          fail("membership at (t=" + std::to_string(t) + ", l=" +
               std::to_string(l) + ", i=" + std::to_string(i) +
               ") sums to " + std::to_string(sum));
        }
      }
      const auto& b = beta[slot(t, l)];
      const auto& g = gamma[slot(t, l)];
      if (b.size() != static_cast<std::size_t>(l > 0 ? beta_support[t]->size() : 0) ||
          g.size() != static_cast<std::size_t>(t > 0 ? gamma_support[t]->size() : 0)) {
        fail("coefficient arrays do not match their supports");
      }
      for (double v : b) if (!(v >= 0.0) || !std::isfinite(v)) fail("beta");
      for (double v : g) if (!(v >= 0.0) || !std::isfinite(v)) fail("gamma");
    }
  }
  for (std::int64_t x : X) if (x < 0) fail("negative latent count");
  for (double v : lambda) if (!(v > 0.0) || !std::isfinite(v)) fail("lambda");
  if (!(M > 0.0) || !std::isfinite(M)) fail("M");
  if (view != nullptr) {
    const auto cells = static_cast<std::size_t>(K) * K;
    for (std::int32_t t = 0; t < T; ++t) {
      const auto links = view->links(t);
      if (C[t].size() != links.size() * cells) fail("C size");
      for (std::size_t e = 0; e < links.size(); ++e) {
        std::int64_t total = 0;
        for (std::size_t c = 0; c < cells; ++c) {
          if (C[t][e * cells + c] < 0) fail("negative C");
          total += C[t][e * cells + c];
        }
        if (total < 1) fail("positive link with zero latent count");
      }
    }
  }
}

void compute_psi(const LatentState& state, std::int32_t i, std::int32_t t,
                 std::int32_t l, std::span<double> out) {
  if (i < 0 || i >= state.N || t < 0 || t >= state.T || l < 0 ||
      l >= state.L || static_cast<std::int32_t>(out.size()) != state.K) {
    throw ParameterError("compute_psi: index out of range");
  }
  std::fill(out.begin(), out.end(), 0.0);
  const std::int32_t K = state.K;
  if (l > 0) {
    const SupportGraph& g = *state.beta_support[t];
    const auto& coef = state.beta[state.slot(t, l)];
    for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
      const auto parent = state.pi_at(t, l - 1, g.sources[e]);
      for (std::int32_t k = 0; k < K; ++k) out[k] += coef[e] * parent[k];
    }
  }
  if (t > 0) {
    const SupportGraph& g = *state.gamma_support[t];
    const auto& coef = state.gamma[state.slot(t, l)];
    for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
      const auto parent = state.pi_at(t - 1, l, g.sources[e]);
      for (std::int32_t k = 0; k < K; ++k) out[k] += coef[e] * parent[k];
    }
  }
}

std::vector<double> compute_psi(const LatentState& state, std::int32_t i,
                                std::int32_t t, std::int32_t l) {
  std::vector<double> out(state.K);
  compute_psi(state, i, t, l, out);
  return out;
}

std::vector<double> dirichlet_concentration(std::span<const double> psi,
                                            std::span<const double> alpha,
                                            std::int32_t t, std::int32_t l,
                                            bool* fallback) {
  if (psi.size() != alpha.size()) {
    throw ParameterError("dirichlet_concentration: length mismatch");
  }
  std::vector<double> out(psi.begin(), psi.end());
  if (t == 0 && l == 0) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += alpha[k];
  }
  const bool degenerate =
      std::all_of(out.begin(), out.end(), [](double v) { return v <= 0.0; });
  if (degenerate) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
  }
  if (fallback != nullptr) *fallback = degenerate;
  return out;
}

double link_rate(const LatentState& state, std::int32_t i, std::int32_t j,
                 std::int32_t t) {
  if (i == j) throw ParameterError("link_rate: self-pairs are undefined");
  if (i < 0 || j < 0 || i >= state.N || j >= state.N || t < 0 ||
      t >= state.T) {
    throw ParameterError("link_rate: index out of range");
  }
  const auto xi = state.x_at(t, i);
  const auto xj = state.x_at(t, j);
  double rate = 0.0;
  for (std::int32_t k1 = 0; k1 < state.K; ++k1) {
    if (xi[k1] == 0) continue;
    double row = 0.0;
    for (std::int32_t k2 = 0; k2 < state.K; ++k2) {
      row += state.lambda_at(k1, k2) * static_cast<double>(xj[k2]);
    }
    rate += static_cast<double>(xi[k1]) * row;
  }
  return rate;
}

double link_prob(double rate) {
  if (!(rate >= 0.0)) throw ParameterError("link_prob: negative rate");
  return -std::expm1(-rate);
}

std::int64_t draw_prior_step(LatentState& state, const Hyperparams& hp,
                             std::int32_t t, std::uint64_t seed,
                             StreamFamily family) {
  std::int64_t fallbacks = 0;
  std::vector<double> psi(state.K);
  for (std::int32_t l = 0; l < state.L; ++l) {
    auto& beta = state.beta[state.slot(t, l)];
    auto& gamma = state.gamma[state.slot(t, l)];
    for (std::int32_t i = 0; i < state.N; ++i) {
      RngStream rng(seed, stream_key(family, i, t, l));
      const double scale = 1.0 / state.d_c;
      if (l > 0) {
        const SupportGraph& g = *state.beta_support[t];
        for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
          const double shape = g.sources[e] == i ? hp.c_c[l] : hp.c_u[l];
          beta[e] = sample_gamma(shape, scale, rng);
        }
      }
      if (t > 0) {
        const SupportGraph& g = *state.gamma_support[t];
        for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
          const double shape = g.sources[e] == i ? hp.c_c[l] : hp.c_u[l];
          gamma[e] = sample_gamma(shape, scale, rng);
        }
      }
      compute_psi(state, i, t, l, psi);
      bool fallback = false;
      const auto conc = dirichlet_concentration(psi, hp.alpha, t, l, &fallback);
      if (fallback) ++fallbacks;
      sample_dirichlet(conc, state.pi_at(t, l, i), rng);
    }
  }
  return fallbacks;
}

void draw_counts_step(LatentState& state, std::int32_t t, std::uint64_t seed,
                      StreamFamily family, std::uint64_t iteration) {
  for (std::int32_t i = 0; i < state.N; ++i) {
    RngStream rng(seed, stream_key(family, i, t, state.L, iteration));
    const std::int64_t total = sample_poisson(state.M, rng);
    const auto top = state.pi_at(t, state.L - 1, i);
    sample_multinomial_weighted(total, top, 1.0, state.x_at(t, i), rng);
  }
}

StepLinks draw_links_step(const LatentState& state, std::int32_t t,
                          std::uint64_t seed, StreamFamily family,
                          std::uint64_t iteration) {
  const std::int32_t K = state.K;
  const std::size_t cells = static_cast<std::size_t>(K) * K;
  StepLinks out;
  std::vector<double> row(K);
  std::vector<double> weights(cells);
  std::vector<std::int64_t> alloc(cells);
  for (std::int32_t i = 0; i < state.N; ++i) {
    const auto xi = state.x_at(t, i);
    if (std::all_of(xi.begin(), xi.end(), [](auto v) { return v == 0; })) {
      continue;
    }
    RngStream rng(seed, stream_key(family, i, t, state.L + 1, iteration));
    // row = X_i^T Lambda
    for (std::int32_t k2 = 0; k2 < K; ++k2) {
      double acc = 0.0;
      for (std::int32_t k1 = 0; k1 < K; ++k1) {
        acc += static_cast<double>(xi[k1]) * state.lambda_at(k1, k2);
      }
      row[k2] = acc;
    }
    const std::int32_t j_begin = state.directed ? 0 : i + 1;
    for (std::int32_t j = j_begin; j < state.N; ++j) {
      if (j == i) continue;
      const auto xj = state.x_at(t, j);
      double rate = 0.0;
      for (std::int32_t k = 0; k < K; ++k) {
        rate += row[k] * static_cast<double>(xj[k]);
      }
      if (rate <= 0.0) continue;
      const std::int64_t total = sample_poisson(rate, rng);
      if (total == 0) continue;
      for (std::int32_t k1 = 0; k1 < K; ++k1) {
        for (std::int32_t k2 = 0; k2 < K; ++k2) {
          weights[static_cast<std::size_t>(k1) * K + k2] =
              static_cast<double>(xi[k1]) * state.lambda_at(k1, k2) *
              static_cast<double>(xj[k2]);
        }
      }
      const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
      sample_multinomial_weighted(total, weights, sum, alloc, rng);
      out.links.push_back({i, j});
      out.C.insert(out.C.end(), alloc.begin(), alloc.end());
    }
  }
  return out;
}

Simulation forward_simulate(const Hyperparams& hp_in, std::int32_t n_nodes,
                            std::int32_t n_steps, bool directed,
                            const SimulationOptions& options,
                            std::uint64_t seed) {
  const Hyperparams hp = hp_in.resolved(n_nodes);
  hp.validate();
  if (n_nodes < 2 || n_steps < 1) {
    throw ParameterError("forward_simulate: need at least 2 nodes and 1 step");
  }
  LatentState state(n_nodes, n_steps, hp.K, hp.L, directed);
  state.d_c = hp.d_c;

  RngStream global(seed, stream_key(StreamFamily::simulate, 0, 0, 0, 1));
  if (options.lambda) {
    if (options.lambda->size() != state.lambda.size()) {
      throw ParameterError("fixed lambda must be K x K");
    }
    state.lambda = *options.lambda;
  } else {
    for (double& v : state.lambda) {
      v = sample_gamma(hp.lambda1, 1.0 / hp.lambda0, global);
    }
  }
  state.M = options.M ? *options.M : sample_gamma(*hp.m_shape, 1.0, global);

  const bool fixed = !options.beta_support.empty();
  if (fixed) {
    state.set_supports(options.beta_support, options.gamma_support);
  } else {
    state.set_supports(
        std::vector<SupportPtr>(n_steps,
                                std::make_shared<SupportGraph>(
                                    SupportGraph::diagonal(n_nodes))),
        std::vector<SupportPtr>(n_steps, std::make_shared<SupportGraph>(
                                             SupportGraph::empty(n_nodes))));
  }

  std::vector<RawEdge> raw;
  for (std::int32_t t = 0; t < n_steps; ++t) {
    draw_prior_step(state, hp, t, seed, StreamFamily::simulate);
    draw_counts_step(state, t, seed, StreamFamily::simulate);
    StepLinks step = draw_links_step(state, t, seed, StreamFamily::simulate);
    for (const Dyad& d : step.links) raw.push_back({t, d.i, d.j});
    state.C[t] = std::move(step.C);
    if (!fixed && t + 1 < n_steps) {
      // Supports for t+1 come from the links just generated at t.
      auto g = std::make_shared<SupportGraph>(
          SupportGraph::from_links(n_nodes, step.links, directed));
      state.beta_support[t + 1] = g;
      state.gamma_support[t + 1] = g;
      for (std::int32_t l = 0; l < hp.L; ++l) {
        state.beta[state.slot(t + 1, l)].assign(l > 0 ? g->size() : 0, 0.0);
        state.gamma[state.slot(t + 1, l)].assign(g->size(), 0.0);
      }
    }
  }
  return {make_network(n_nodes, n_steps, directed, raw), std::move(state)};
}

} // namespace rdbn
