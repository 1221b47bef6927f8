#include "rdbn/inference.hpp"

#include <algorithm>
#include <cfloat>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "parallel.hpp"
#include "rdbn/checkpoint.hpp"
#include "rdbn/errors.hpp"

namespace rdbn {

namespace {

using detail::parallel_for;

// Smallest x giving the boundary probability of the X window.
constexpr double kWindowTail = 1e-6;
constexpr int kMaxWindowDoublings = 10;

bool receives_split(std::int32_t t, std::int32_t l, bool temporal) {
  return l > 0 || (t > 0 && temporal);
}

// y_k ~ CRT(m_k, psi_k); returns log q, 0 when there are no counts.
double draw_auxiliary_into(std::span<const std::int64_t> m,
                           std::span<const double> psi,
                           std::span<std::int64_t> y, RngStream& rng) {
  std::int64_t m_total = 0;
  double psi_total = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m[k] < 0) throw NumericalError("negative latent count in propagation");
    if (m[k] > 0 && !(psi[k] > 0.0)) {
      throw NumericalError("counts reached a community with zero concentration");
    }
    y[k] = sample_crt(m[k], psi[k], rng);
    m_total += m[k];
    psi_total += psi[k];
  }
  if (m_total == 0) return 0.0;
  return sample_log_beta(psi_total, static_cast<double>(m_total), rng);
}

// Splits y counts of community k over the parents of (t, l, i). Results go
// to lower[e] (beta entries) and previous[e] (gamma entries).
void split_counts(const LatentState& state, std::int32_t i, std::int32_t k,
                  std::int32_t t, std::int32_t l, std::int64_t y, double psi_k,
                  bool temporal, RngStream& rng, std::vector<double>& weights,
                  std::vector<std::int64_t>& alloc,
                  std::span<std::int64_t> lower,
                  std::span<std::int64_t> previous) {
  std::fill(lower.begin(), lower.end(), 0);
  std::fill(previous.begin(), previous.end(), 0);
  if (y == 0) return;
  weights.clear();
  double total = 0.0;
  std::int64_t b0 = 0;
  std::int64_t nb = 0;
  if (l > 0) {
    const SupportGraph& g = *state.beta_support[t];
    const auto& coef = state.beta[state.slot(t, l)];
    b0 = g.row_begin(i);
    nb = g.row_end(i) - b0;
    for (std::int64_t e = b0; e < b0 + nb; ++e) {
      const double w = coef[e] * state.pi_at(t, l - 1, g.sources[e])[k];
      weights.push_back(w);
      total += w;
    }
  }
  std::int64_t g0 = 0;
  std::int64_t ng = 0;
  if (t > 0 && temporal) {
    const SupportGraph& g = *state.gamma_support[t];
    const auto& coef = state.gamma[state.slot(t, l)];
    g0 = g.row_begin(i);
    ng = g.row_end(i) - g0;
    for (std::int64_t e = g0; e < g0 + ng; ++e) {
      const double w = coef[e] * state.pi_at(t - 1, l, g.sources[e])[k];
      weights.push_back(w);
      total += w;
    }
  }
  if (!(total > 0.0) ||
      std::abs(total - psi_k) > 1e-9 * std::max(1.0, std::abs(psi_k))) {
    throw NumericalError("count split weights do not match psi at (t=" +
                         std::to_string(t) + ", l=" + std::to_string(l) +
                         ", i=" + std::to_string(i) + ")");
  }
  alloc.resize(weights.size());
  sample_multinomial_weighted(y, weights, total, alloc, rng);
  std::copy_n(alloc.begin(), nb, lower.begin());
  std::copy_n(alloc.begin() + nb, ng, previous.begin());
}

// Psi without the cross-time part when temporal coupling is off.
void cell_psi(const LatentState& state, std::int32_t i, std::int32_t t,
              std::int32_t l, bool temporal, std::span<double> out) {
  if (temporal || t == 0) {
    compute_psi(state, i, t, l, out);
    return;
  }
  std::fill(out.begin(), out.end(), 0.0);
  if (l == 0) return;
  const SupportGraph& g = *state.beta_support[t];
  const auto& coef = state.beta[state.slot(t, l)];
  for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
    const auto parent = state.pi_at(t, l - 1, g.sources[e]);
    for (std::int32_t k = 0; k < state.K; ++k) out[k] += coef[e] * parent[k];
  }
}

std::int64_t initial_window(double M, std::int32_t K) {
  return std::max<std::int64_t>(
      30, static_cast<std::int64_t>(std::ceil(3.0 * M / K)));
}

std::int64_t draw_latent_count(double prior_rate, std::int64_t links,
                               double exposure, std::int64_t window,
                               RngStream& rng, std::int64_t& expansions) {
  if (links == 0 && prior_rate <= 0.0) return 0;
  for (int d = 0; d <= kMaxWindowDoublings; ++d) {
    const auto w = latent_count_pmf(prior_rate, links, exposure, window);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (w.back() <= kWindowTail * total) {
      return static_cast<std::int64_t>(sample_categorical(w, rng));
    }
    ++expansions;
    window *= 2;
  }
  throw NumericalError("latent count window did not converge");
}

} // namespace

PropagationWorkspace::PropagationWorkspace(const LatentState& state)
    : N(state.N), T(state.T), K(state.K), L(state.L) {
  const std::size_t cells = static_cast<std::size_t>(T) * L * N;
  psi.assign(cells * K, 0.0);
  m.assign(cells * K, 0);
  y.assign(cells * K, 0);
  log_q.assign(cells, 0.0);
  Z.assign(static_cast<std::size_t>(T) * L, {});
  A.assign(static_cast<std::size_t>(T) * L, {});
}

double PropagationWorkspace::q(std::int32_t t, std::int32_t l,
                               std::int32_t i) const {
  return std::exp(log_q[cell(t, l, i)]);
}

Auxiliary draw_auxiliary(std::span<const std::int64_t> m,
                         std::span<const double> psi, RngStream& rng) {
  if (m.size() != psi.size()) {
    throw ParameterError("draw_auxiliary: length mismatch");
  }
  Auxiliary out;
  out.y.assign(m.size(), 0);
  out.log_q = draw_auxiliary_into(m, psi, out.y, rng);
  out.q = std::exp(out.log_q);
  return out;
}

CountSplit distribute_counts(const LatentState& state, std::int32_t i,
                             std::int32_t k, std::int32_t t, std::int32_t l,
                             std::int64_t y, double psi_k, RngStream& rng,
                             bool temporal) {
  if (y < 0) throw ParameterError("distribute_counts: negative count");
  CountSplit out;
  out.to_lower.assign(l > 0 ? state.beta_support[t]->row(i).size() : 0, 0);
  out.to_previous.assign(
      t > 0 && temporal ? state.gamma_support[t]->row(i).size() : 0, 0);
  std::vector<double> weights;
  std::vector<std::int64_t> alloc;
  split_counts(state, i, k, t, l, y, psi_k, temporal, rng, weights, alloc,
               out.to_lower, out.to_previous);
  return out;
}

std::vector<double> latent_count_pmf(double prior_rate, std::int64_t links,
                                     double exposure, std::int64_t window) {
  if (window < 1 || links < 0 || !(exposure >= 0.0) || !(prior_rate >= 0.0)) {
    throw ParameterError("latent_count_pmf: invalid arguments");
  }
  std::vector<double> w(static_cast<std::size_t>(window) + 1, 0.0);
  if (links == 0 && prior_rate == 0.0) {
    w[0] = 1.0;
    return w;
  }
  const double log_a = std::log(std::max(prior_rate, DBL_MIN));
  const std::int64_t lo = links > 0 ? 1 : 0;
  if (lo > window) return w;
  const auto c = static_cast<double>(links);
  // log w(x+1) - log w(x) = log a - log(x+1) + c log((x+1)/x) - exposure
  std::vector<double> lw(w.size(), -std::numeric_limits<double>::infinity());
  lw[lo] = 0.0;
  double best = 0.0;
  for (std::int64_t x = lo; x < window; ++x) {
    const double x1 = static_cast<double>(x + 1);
    double step = log_a - std::log(x1) - exposure;
    if (x > 0 && links > 0) step += c * std::log1p(1.0 / static_cast<double>(x));
    lw[x + 1] = lw[x] + step;
    best = std::max(best, lw[x + 1]);
  }
  for (std::size_t x = lo; x < w.size(); ++x) w[x] = std::exp(lw[x] - best);
  return w;
}

GibbsSampler::GibbsSampler(const Hyperparams& hp, std::uint64_t seed,
                           SamplerOptions options)
    : hp_(hp), seed_(seed), options_(options) {
  hp_.validate();
  if (options_.threads < 1) throw ParameterError("threads must be at least 1");
  if (!(options_.rate_floor > 0.0)) {
    throw ParameterError("rate floor must be positive");
  }
}

LatentState GibbsSampler::initialise(const TrainingView& view) {
  const std::int32_t N = view.n_nodes();
  const std::int32_t T = view.n_steps();
  if (N < 2 || T < 1) throw DataError("need at least 2 nodes and 1 time step");
  LatentState state(N, T, hp_.K, hp_.L, view.directed());
  state.d_c = hp_.d_c;

  std::vector<SupportPtr> beta_sup(T);
  std::vector<SupportPtr> gamma_sup(T);
  const auto empty = std::make_shared<SupportGraph>(SupportGraph::empty(N));
  for (std::int32_t t = 0; t < T; ++t) {
    beta_sup[t] = std::make_shared<SupportGraph>(
        SupportGraph::from_links(N, view.links(t), view.directed()));
    gamma_sup[t] = t > 0 && options_.temporal ? beta_sup[t - 1] : empty;
  }
  state.set_supports(std::move(beta_sup), std::move(gamma_sup));

  RngStream global(seed_, stream_key(StreamFamily::initialise, 0, 0, 0, 1));
  for (double& v : state.lambda) {
    v = sample_gamma(hp_.lambda1, 1.0 / hp_.lambda0, global);
  }
  state.M = sample_gamma(*hp_.m_shape, 1.0, global);

  for (std::int32_t t = 0; t < T; ++t) {
    counters_.concentration_fallbacks +=
        draw_prior_step(state, hp_, t, seed_, StreamFamily::initialise);
    draw_counts_step(state, t, seed_, StreamFamily::initialise);
  }
  // A positive link needs X_i, X_j nonzero; start both ends at >= 1.
  for (std::int32_t t = 0; t < T; ++t) {
    for (const Dyad& d : view.links(t)) {
      for (std::int32_t node : {d.i, d.j}) {
        auto x = state.x_at(t, node);
        if (std::all_of(x.begin(), x.end(), [](auto v) { return v == 0; })) {
          const auto top = state.pi_at(t, hp_.L - 1, node);
          x[std::max_element(top.begin(), top.end()) - top.begin()] = 1;
        }
      }
    }
    state.C[t].assign(view.links(t).size() * static_cast<std::size_t>(hp_.K) *
                          hp_.K,
                      0);
  }
  sample_C(state, view, 0);
  return state;
}

PropagationWorkspace GibbsSampler::upward_backward_pass(
    const LatentState& state, std::uint64_t iteration) {
  PropagationWorkspace ws(state);
  const std::int32_t N = state.N;
  const std::int32_t K = state.K;
  const std::int32_t L = state.L;
  const bool temporal = options_.temporal;

  for (std::int32_t t = state.T - 1; t >= 0; --t) {
    for (std::int32_t i = 0; i < N; ++i) {
      auto m = ws.m_at(t, L - 1, i);
      const auto x = state.x_at(t, i);
      for (std::int32_t k = 0; k < K; ++k) m[k] += x[k];
    }
    for (std::int32_t l = L - 1; l >= 0; --l) {
      const std::size_t s = state.slot(t, l);
      if (!receives_split(t, l, temporal)) {
        for (std::int32_t i = 0; i < N; ++i) {
          auto psi = std::span<double>(ws.psi).subspan(ws.cell(t, l, i) * K, K);
          cell_psi(state, i, t, l, temporal, psi);
        }
        continue;
      }
      const SupportGraph* bg = l > 0 ? state.beta_support[t].get() : nullptr;
      const SupportGraph* gg =
          t > 0 && temporal ? state.gamma_support[t].get() : nullptr;
      auto& Z = ws.Z[s];
      auto& A = ws.A[s];
      Z.assign(bg ? static_cast<std::size_t>(bg->size()) * K : 0, 0);
      A.assign(gg ? static_cast<std::size_t>(gg->size()) * K : 0, 0);

      parallel_for(N, options_.threads, [&](std::int64_t ii) {
        const auto i = static_cast<std::int32_t>(ii);
        RngStream rng(seed_, stream_key(StreamFamily::propagate, i, t, l,
                                        iteration));
        const std::size_t c = ws.cell(t, l, i);
        auto psi = std::span<double>(ws.psi).subspan(c * K, K);
        auto y = std::span<std::int64_t>(ws.y).subspan(c * K, K);
        cell_psi(state, i, t, l, temporal, psi);
        ws.log_q[c] = draw_auxiliary_into(ws.m_at(t, l, i), psi, y, rng);

        const std::int64_t b0 = bg ? bg->row_begin(i) : 0;
        const std::int64_t nb = bg ? bg->row_end(i) - b0 : 0;
        const std::int64_t g0 = gg ? gg->row_begin(i) : 0;
        const std::int64_t ng = gg ? gg->row_end(i) - g0 : 0;
        std::vector<double> weights;
        std::vector<std::int64_t> alloc;
        std::vector<std::int64_t> lower(nb);
        std::vector<std::int64_t> previous(ng);
        for (std::int32_t k = 0; k < K; ++k) {
          if (y[k] == 0) continue;
          split_counts(state, i, k, t, l, y[k], psi[k], temporal, rng, weights,
                       alloc, lower, previous);
          for (std::int64_t e = 0; e < nb; ++e) {
            Z[static_cast<std::size_t>(b0 + e) * K + k] = lower[e];
          }
          for (std::int64_t e = 0; e < ng; ++e) {
            A[static_cast<std::size_t>(g0 + e) * K + k] = previous[e];
          }
        }
      });

      // Scatter to the parents; serial so the sums are order-fixed.
      if (bg) {
        for (std::int32_t i = 0; i < N; ++i) {
          for (std::int64_t e = bg->row_begin(i); e < bg->row_end(i); ++e) {
            auto m = ws.m_at(t, l - 1, bg->sources[e]);
            for (std::int32_t k = 0; k < K; ++k) {
              m[k] += Z[static_cast<std::size_t>(e) * K + k];
            }
          }
        }
      }
      if (gg) {
        for (std::int32_t i = 0; i < N; ++i) {
          for (std::int64_t e = gg->row_begin(i); e < gg->row_end(i); ++e) {
            auto m = ws.m_at(t - 1, l, gg->sources[e]);
            for (std::int32_t k = 0; k < K; ++k) {
              m[k] += A[static_cast<std::size_t>(e) * K + k];
            }
          }
        }
      }
    }
  }
  return ws;
}

void GibbsSampler::sample_coefficients_cell(LatentState& state,
                                            const PropagationWorkspace& ws,
                                            std::int32_t t, std::int32_t l,
                                            std::int32_t i,
                                            std::uint64_t iteration) {
  if (!receives_split(t, l, options_.temporal)) return;
  RngStream rng(seed_, stream_key(StreamFamily::coefficient, i, t, l, iteration));
  const double rate = state.d_c - ws.log_q[ws.cell(t, l, i)];
  const double scale = 1.0 / rate;
  const std::int32_t K = state.K;
  if (l > 0) {
    const SupportGraph& g = *state.beta_support[t];
    auto& coef = state.beta[state.slot(t, l)];
    const auto& Z = ws.Z[state.slot(t, l)];
    for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
      double shape = (g.sources[e] == i ? hp_.c_c[l] : hp_.c_u[l]) +
                     options_.beta_shape_offset;
      if (!Z.empty()) {
        for (std::int32_t k = 0; k < K; ++k) {
          shape += static_cast<double>(Z[static_cast<std::size_t>(e) * K + k]);
        }
      }
      coef[e] = sample_gamma(shape, scale, rng);
    }
  }
  if (t > 0 && options_.temporal) {
    const SupportGraph& g = *state.gamma_support[t];
    auto& coef = state.gamma[state.slot(t, l)];
    const auto& A = ws.A[state.slot(t, l)];
    for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
      double shape = g.sources[e] == i ? hp_.c_c[l] : hp_.c_u[l];
      if (!A.empty()) {
        for (std::int32_t k = 0; k < K; ++k) {
          shape += static_cast<double>(A[static_cast<std::size_t>(e) * K + k]);
        }
      }
      coef[e] = sample_gamma(shape, scale, rng);
    }
  }
}

void GibbsSampler::sample_pi_cell(LatentState& state,
                                  const PropagationWorkspace& ws,
                                  std::int32_t t, std::int32_t l,
                                  std::int32_t i, std::uint64_t iteration,
                                  std::int64_t& fallbacks) {
  RngStream rng(seed_, stream_key(StreamFamily::membership, i, t, l, iteration));
  std::vector<double> psi(state.K);
  cell_psi(state, i, t, l, options_.temporal, psi);
  bool fallback = false;
  auto conc = dirichlet_concentration(psi, hp_.alpha, t, l, &fallback);
  if (fallback) ++fallbacks;
  const auto m = ws.m_at(t, l, i);
  for (std::int32_t k = 0; k < state.K; ++k) {
    conc[k] += static_cast<double>(m[k]);
  }
  sample_dirichlet(conc, state.pi_at(t, l, i), rng);
}

void GibbsSampler::sample_pi(LatentState& state, const PropagationWorkspace& ws,
                             std::uint64_t iteration) {
  std::vector<std::int64_t> fallbacks(state.N);
  for (std::int32_t t = 0; t < state.T; ++t) {
    for (std::int32_t l = 0; l < state.L; ++l) {
      std::fill(fallbacks.begin(), fallbacks.end(), 0);
      parallel_for(state.N, options_.threads, [&](std::int64_t i) {
        sample_pi_cell(state, ws, t, l, static_cast<std::int32_t>(i), iteration,
                       fallbacks[i]);
      });
      for (auto f : fallbacks) counters_.concentration_fallbacks += f;
    }
  }
}

void GibbsSampler::sample_beta_gamma(LatentState& state,
                                     const PropagationWorkspace& ws,
                                     std::uint64_t iteration) {
  for (std::int32_t t = 0; t < state.T; ++t) {
    for (std::int32_t l = 0; l < state.L; ++l) {
      parallel_for(state.N, options_.threads, [&](std::int64_t i) {
        sample_coefficients_cell(state, ws, t, l, static_cast<std::int32_t>(i),
                                 iteration);
      });
    }
  }
}

void GibbsSampler::forward_downward_sweep(LatentState& state,
                                          const PropagationWorkspace& ws,
                                          std::uint64_t iteration) {
  std::vector<std::int64_t> fallbacks(state.N);
  for (std::int32_t t = 0; t < state.T; ++t) {
    for (std::int32_t l = 0; l < state.L; ++l) {
      std::fill(fallbacks.begin(), fallbacks.end(), 0);
      parallel_for(state.N, options_.threads, [&](std::int64_t ii) {
        const auto i = static_cast<std::int32_t>(ii);
        sample_coefficients_cell(state, ws, t, l, i, iteration);
        sample_pi_cell(state, ws, t, l, i, iteration, fallbacks[ii]);
      });
      for (auto f : fallbacks) counters_.concentration_fallbacks += f;
    }
  }
}

void GibbsSampler::sample_dc(LatentState& state, std::uint64_t iteration) {
  double shape = 1.0;
  double rate = 1.0;
  for (std::int32_t t = 0; t < state.T; ++t) {
    for (std::int32_t l = 0; l < state.L; ++l) {
      if (l > 0) {
        const SupportGraph& g = *state.beta_support[t];
        const auto& coef = state.beta[state.slot(t, l)];
        for (std::int32_t i = 0; i < state.N; ++i) {
          for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
            shape += g.sources[e] == i ? hp_.c_c[l] : hp_.c_u[l];
            rate += coef[e];
          }
        }
      }
      if (t > 0 && options_.temporal) {
        const SupportGraph& g = *state.gamma_support[t];
        const auto& coef = state.gamma[state.slot(t, l)];
        for (std::int32_t i = 0; i < state.N; ++i) {
          for (std::int64_t e = g.row_begin(i); e < g.row_end(i); ++e) {
            shape += g.sources[e] == i ? hp_.c_c[l] : hp_.c_u[l];
            rate += coef[e];
          }
        }
      }
    }
  }
  RngStream rng(seed_, stream_key(StreamFamily::coefficient_rate, 0, 0, 0,
                                  iteration));
  state.d_c = sample_gamma(shape, 1.0 / rate, rng);
}

void GibbsSampler::sample_X(LatentState& state, const TrainingView& view,
                            std::uint64_t iteration) {
  const std::int32_t N = state.N;
  const std::int32_t K = state.K;
  const std::size_t cells = static_cast<std::size_t>(K) * K;
  const std::int64_t window0 = initial_window(state.M, K);
  std::vector<std::int64_t> expansions(state.T, 0);

  parallel_for(state.T, options_.threads, [&](std::int64_t tt) {
    const auto t = static_cast<std::int32_t>(tt);
    // Link counts attached to each (node, community).
    std::vector<std::int64_t> attached(static_cast<std::size_t>(N) * K, 0);
    const auto links = view.links(t);
    for (std::size_t e = 0; e < links.size(); ++e) {
      const std::int64_t* block = state.C[t].data() + e * cells;
      for (std::int32_t k1 = 0; k1 < K; ++k1) {
        for (std::int32_t k2 = 0; k2 < K; ++k2) {
          const std::int64_t c = block[static_cast<std::size_t>(k1) * K + k2];
          attached[static_cast<std::size_t>(links[e].i) * K + k1] += c;
          attached[static_cast<std::size_t>(links[e].j) * K + k2] += c;
        }
      }
    }
    std::vector<std::int64_t> S(K, 0);
    std::vector<std::int64_t> prefix(K, 0);
    for (std::int32_t i = 0; i < N; ++i) {
      const auto x = state.x_at(t, i);
      for (std::int32_t k = 0; k < K; ++k) S[k] += x[k];
    }
    std::vector<std::int64_t> out_sum(K);
    std::vector<std::int64_t> in_sum(K);
    std::vector<double> exposure(K);
    for (std::int32_t i = 0; i < N; ++i) {
      auto x = state.x_at(t, i);
      for (std::int32_t k = 0; k < K; ++k) {
        if (state.directed) {
          out_sum[k] = S[k] - x[k];
          in_sum[k] = S[k] - x[k];
        } else {
          out_sum[k] = S[k] - prefix[k] - x[k];
          in_sum[k] = prefix[k];
        }
      }
      for (std::int32_t j : view.heldout_out(t, i)) {
        const auto xj = state.x_at(t, j);
        for (std::int32_t k = 0; k < K; ++k) out_sum[k] -= xj[k];
      }
      for (std::int32_t j : view.heldout_in(t, i)) {
        const auto xj = state.x_at(t, j);
        for (std::int32_t k = 0; k < K; ++k) in_sum[k] -= xj[k];
      }
      for (std::int32_t k = 0; k < K; ++k) {
        double r = 0.0;
        for (std::int32_t k2 = 0; k2 < K; ++k2) {
          r += state.lambda_at(k, k2) * static_cast<double>(out_sum[k2]) +
               state.lambda_at(k2, k) * static_cast<double>(in_sum[k2]);
        }
        exposure[k] = r;
      }
      RngStream rng(seed_, stream_key(StreamFamily::latent_counts, i, t, 0,
                                      iteration));
      const auto top = state.pi_at(t, state.L - 1, i);
      for (std::int32_t k = 0; k < K; ++k) {
        const std::int64_t updated = draw_latent_count(
            state.M * top[k], attached[static_cast<std::size_t>(i) * K + k],
            exposure[k], window0, rng, expansions[t]);
        S[k] += updated - x[k];
        x[k] = updated;
      }
      if (!state.directed) {
        for (std::int32_t k = 0; k < K; ++k) prefix[k] += x[k];
      }
    }
  });
  for (auto e : expansions) counters_.window_expansions += e;
}

void GibbsSampler::sample_C(LatentState& state, const TrainingView& view,
                            std::uint64_t iteration) {
  const std::int32_t K = state.K;
  const std::size_t cells = static_cast<std::size_t>(K) * K;
  std::vector<std::int64_t> offsets(state.T + 1, 0);
  for (std::int32_t t = 0; t < state.T; ++t) {
    offsets[t + 1] = offsets[t] + static_cast<std::int64_t>(view.links(t).size());
    state.C[t].resize(view.links(t).size() * cells);
  }
  std::vector<char> floored(offsets.back(), 0);
  const double floor = options_.rate_floor;

  parallel_for(offsets.back(), options_.threads, [&](std::int64_t flat) {
    const auto t = static_cast<std::int32_t>(
        std::upper_bound(offsets.begin(), offsets.end(), flat) -
        offsets.begin() - 1);
    const std::int64_t e = flat - offsets[t];
    const Dyad d = view.links(t)[e];
    RngStream rng(seed_, stream_key(StreamFamily::link_counts, e, t, 0,
                                    iteration));
    const auto xi = state.x_at(t, d.i);
    const auto xj = state.x_at(t, d.j);
    std::vector<double> weights(cells);
    double rate = 0.0;
    for (std::int32_t k1 = 0; k1 < K; ++k1) {
      for (std::int32_t k2 = 0; k2 < K; ++k2) {
        const double w = static_cast<double>(xi[k1]) * state.lambda_at(k1, k2) *
                         static_cast<double>(xj[k2]);
        weights[static_cast<std::size_t>(k1) * K + k2] = w;
        rate += w;
      }
    }
    if (rate < floor) {
      floored[flat] = 1;
      if (!(rate > 0.0)) {
        std::fill(weights.begin(), weights.end(), 1.0);
        rate = static_cast<double>(cells);
      }
    }
    const std::int64_t total = sample_ztp(std::max(rate, floor), rng);
    sample_multinomial_weighted(
        total, weights, rate,
        std::span<std::int64_t>(state.C[t]).subspan(e * cells, cells), rng);
  });
  for (char f : floored) counters_.rate_floor_hits += f;
}

void GibbsSampler::sample_lambda(LatentState& state, const TrainingView& view,
                                 std::uint64_t iteration) {
  const std::int32_t K = state.K;
  const std::size_t cells = static_cast<std::size_t>(K) * K;
  std::vector<double> shape(cells, hp_.lambda1);
  std::vector<std::int64_t> exposure(cells, 0);
  for (std::int32_t t = 0; t < state.T; ++t) {
    const auto& C = state.C[t];
    for (std::size_t e = 0; e < view.links(t).size(); ++e) {
      for (std::size_t c = 0; c < cells; ++c) {
        shape[c] += static_cast<double>(C[e * cells + c]);
      }
    }
    const auto ex = dyad_exposure(state, view, t);
    for (std::size_t c = 0; c < cells; ++c) exposure[c] += ex[c];
  }
  for (std::size_t c = 0; c < cells; ++c) {
    RngStream rng(seed_, stream_key(StreamFamily::compatibility, c, 0, 0,
                                    iteration));
    state.lambda[c] = sample_gamma(
        shape[c], 1.0 / (hp_.lambda0 + static_cast<double>(exposure[c])), rng);
  }
}

void GibbsSampler::sample_M(LatentState& state, std::uint64_t iteration) {
  std::int64_t total = 0;
  for (std::int64_t x : state.X) total += x;
  RngStream rng(seed_, stream_key(StreamFamily::scale, 0, 0, 0, iteration));
  const double nt = static_cast<double>(state.N) * state.T;
  state.M = sample_gamma(*hp_.m_shape + static_cast<double>(total),
                         1.0 / (1.0 + nt), rng);
}

void GibbsSampler::iterate(LatentState& state, const TrainingView& view,
                           std::uint64_t iteration) {
  const PropagationWorkspace ws = upward_backward_pass(state, iteration);
  forward_downward_sweep(state, ws, iteration);
  if (hp_.resample_dc) sample_dc(state, iteration);
  sample_X(state, view, iteration);
  sample_C(state, view, iteration);
  sample_lambda(state, view, iteration);
  sample_M(state, iteration);
}

std::vector<std::int64_t> dyad_exposure(const LatentState& state,
                                        const TrainingView& view,
                                        std::int32_t t) {
  const std::int32_t K = state.K;
  std::vector<std::int64_t> E(static_cast<std::size_t>(K) * K, 0);
  auto add_outer = [&](std::span<const std::int64_t> a,
                       std::span<const std::int64_t> b, std::int64_t sign) {
    for (std::int32_t k1 = 0; k1 < K; ++k1) {
      if (a[k1] == 0) continue;
      for (std::int32_t k2 = 0; k2 < K; ++k2) {
        E[static_cast<std::size_t>(k1) * K + k2] += sign * a[k1] * b[k2];
      }
    }
  };
  if (state.directed) {
    std::vector<std::int64_t> S(K, 0);
    for (std::int32_t i = 0; i < state.N; ++i) {
      const auto x = state.x_at(t, i);
      for (std::int32_t k = 0; k < K; ++k) S[k] += x[k];
      add_outer(x, x, -1);
    }
    add_outer(S, S, 1);
  } else {
    std::vector<std::int64_t> prefix(K, 0);
    for (std::int32_t j = 0; j < state.N; ++j) {
      const auto x = state.x_at(t, j);
      add_outer(prefix, x, 1);
      for (std::int32_t k = 0; k < K; ++k) prefix[k] += x[k];
    }
  }
  for (const Dyad& d : view.heldout(t)) {
    add_outer(state.x_at(t, d.i), state.x_at(t, d.j), -1);
  }
  return E;
}

double training_log_likelihood(const LatentState& state,
                               const TrainingView& view) {
  double total = 0.0;
  for (std::int32_t t = 0; t < state.T; ++t) {
    for (const Dyad& d : view.links(t)) {
      const double r = link_rate(state, d.i, d.j, t);
      // log(1 - e^-r) + r; the -r part is removed again by the exposure term.
      total += std::log(-std::expm1(-r)) + r;
    }
    const auto E = dyad_exposure(state, view, t);
    for (std::size_t c = 0; c < E.size(); ++c) {
      total -= state.lambda[c] * static_cast<double>(E[c]);
    }
  }
  return total;
}

double heldout_log_likelihood(const LatentState& state,
                              const HoldoutMask& mask) {
  double total = 0.0;
  for (const HoldoutEntry& h : mask.entries) {
    const double r = link_rate(state, h.dyad.i, h.dyad.j, h.t);
    total += h.label ? std::log(-std::expm1(-r)) : -r;
  }
  return total;
}

namespace {

double mean_of(const std::vector<std::vector<double>>& arrays) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& a : arrays) {
    for (double v : a) sum += v;
    n += static_cast<std::int64_t>(a.size());
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                : sum / static_cast<double>(n);
}

} // namespace

double mean_beta(const LatentState& state) { return mean_of(state.beta); }
double mean_gamma(const LatentState& state) { return mean_of(state.gamma); }

void PosteriorAccumulator::add(const LatentState& state,
                               const HoldoutMask& mask) {
  if (survival_sum.empty()) survival_sum.assign(mask.entries.size(), 0.0);
  if (survival_sum.size() != mask.entries.size()) {
    throw ParameterError("posterior accumulator does not match the mask");
  }
  for (std::size_t e = 0; e < mask.entries.size(); ++e) {
    const HoldoutEntry& h = mask.entries[e];
    survival_sum[e] += std::exp(-link_rate(state, h.dyad.i, h.dyad.j, h.t));
  }
  ++n_samples;
}

FitResult fit(const TrainingView& view, const HoldoutMask& mask,
              const Hyperparams& hp_in, const FitOptions& options) {
  const Hyperparams hp = hp_in.resolved(view.n_nodes());
  hp.validate();
  GibbsSampler sampler(hp, hp.seed, options.sampler);

  FitResult result;
  std::int64_t start = 1;
  const bool have_dir = !options.checkpoint_dir.empty();
  if (options.resume && have_dir &&
      std::filesystem::exists(options.checkpoint_dir / "manifest.txt")) {
    Checkpoint ckpt = load_checkpoint(options.checkpoint_dir);
    if (ckpt.state.N != view.n_nodes() || ckpt.state.T != view.n_steps() ||
        ckpt.state.K != hp.K || ckpt.state.L != hp.L ||
        ckpt.state.directed != view.directed()) {
      throw DataError("checkpoint does not match the data or hyperparameters");
    }
    ckpt.state.check_invariants(&view);
    result.state = std::move(ckpt.state);
    result.posterior = std::move(ckpt.posterior);
    result.counters = ckpt.counters;
    start = ckpt.iteration + 1;
  } else {
    result.state = sampler.initialise(view);
  }
  result.first_iteration = start;
  // Counters restored from a checkpoint plus whatever this run adds.
  const SamplerCounters base = result.counters;

  auto current_counters = [&] {
    SamplerCounters c = base;
    c.rate_floor_hits += sampler.counters().rate_floor_hits;
    c.concentration_fallbacks += sampler.counters().concentration_fallbacks;
    c.window_expansions += sampler.counters().window_expansions;
    return c;
  };

  using clock = std::chrono::steady_clock;
  for (std::int64_t it = start; it <= hp.iterations; ++it) {
    const auto t0 = clock::now();
    sampler.iterate(result.state, view, static_cast<std::uint64_t>(it));
    if (it > hp.burn_in) result.posterior.add(result.state, mask);
    const double seconds =
        std::chrono::duration<double>(clock::now() - t0).count();
    if (options.on_iteration) {
      IterationRecord rec;
      rec.iteration = it;
      rec.seconds = seconds;
      rec.train_loglik = training_log_likelihood(result.state, view);
      rec.M = result.state.M;
      rec.mean_beta = mean_beta(result.state);
      rec.mean_gamma = mean_gamma(result.state);
      options.on_iteration(rec);
    }
    const bool due = (options.checkpoint_every > 0 &&
                      it % options.checkpoint_every == 0) ||
                     it == hp.iterations;
    if (have_dir && due) {
      result.state.check_invariants(&view);
      Checkpoint ckpt;
      ckpt.hp = hp;
      ckpt.iteration = it;
      ckpt.state = result.state;
      ckpt.posterior = result.posterior;
      ckpt.counters = current_counters();
      try {
        save_checkpoint(options.checkpoint_dir, ckpt);
      } catch (const std::exception& e) {
        throw DataError("checkpoint at iteration " + std::to_string(it) +
                        " failed: " + e.what());
      }
    }
  }
  result.counters = current_counters();
  return result;
}

} // namespace rdbn
