#include "rdbn/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "rdbn/errors.hpp"
#include "rdbn/text.hpp"

namespace rdbn {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "rdbn-checkpoint-1";

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ',';
    out += format_real(v[k]);
  }
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_support(const fs::path& path, const std::vector<SupportPtr>& sup) {
  auto out = open_out(path);
  out << "t,receiver,source\n";
  for (std::size_t t = 0; t < sup.size(); ++t) {
    const SupportGraph& g = *sup[t];
    for (std::int32_t i = 0; i < g.n_nodes; ++i) {
      for (std::int32_t s : g.row(i)) out << t << ',' << i << ',' << s << '\n';
    }
  }
}

void write_coefficients(const fs::path& path, const LatentState& state,
                        const std::vector<std::vector<double>>& coef) {
  auto out = open_out(path);
  out << "t,l,entry,value\n";
  for (std::int32_t t = 0; t < state.T; ++t) {
    for (std::int32_t l = 0; l < state.L; ++l) {
      const auto& v = coef[state.slot(t, l)];
      for (std::size_t e = 0; e < v.size(); ++e) {
        out << t << ',' << l << ',' << e << ',' << format_real(v[e]) << '\n';
      }
    }
  }
}

/// Reads a CSV with a header line; each row must have `width` fields
/// (0 = any). Calls fn(fields, line_number).
template <class Fn>
void read_csv(const fs::path& path, std::size_t width, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::int64_t lineno = 1;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_fields(trim(line), ',');
    if (width != 0 && fields.size() != width) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected " + std::to_string(width) + " fields");
    }
    fn(fields, lineno);
  }
}

struct FieldReader {
  const fs::path& path;
  std::int64_t line;

  std::int64_t integer(std::string_view s) const {
    std::int64_t v = 0;
    if (!parse_int64(s, v)) fail("bad integer '" + std::string(s) + "'");
    return v;
  }
  double real(std::string_view s) const {
    double v = 0.0;
    if (!parse_real(s, v)) fail("bad number '" + std::string(s) + "'");
    return v;
  }
  void fail(const std::string& what) const {
    throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
  }
};

std::vector<SupportPtr> read_support(const fs::path& path, std::int32_t N,
                                     std::int32_t T) {
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> rows(T);
  read_csv(path, 3, [&](const auto& f, std::int64_t line) {
    FieldReader r{path, line};
    const auto t = r.integer(f[0]);
    const auto i = r.integer(f[1]);
    const auto s = r.integer(f[2]);
    if (t < 0 || t >= T || i < 0 || i >= N || s < 0 || s >= N) {
      r.fail("index out of range");
    }
    if (!rows[t].empty() && rows[t].back().first > i) {
      r.fail("receivers out of order");
    }
    rows[t].emplace_back(static_cast<std::int32_t>(i),
                         static_cast<std::int32_t>(s));
  });
  std::vector<SupportPtr> out(T);
  for (std::int32_t t = 0; t < T; ++t) {
    auto g = std::make_shared<SupportGraph>(SupportGraph::empty(N));
    for (const auto& [i, s] : rows[t]) {
      ++g->offsets[i + 1];
      g->sources.push_back(s);
    }
    for (std::int32_t i = 0; i < N; ++i) g->offsets[i + 1] += g->offsets[i];
    out[t] = std::move(g);
  }
  return out;
}

void read_coefficients(const fs::path& path, LatentState& state,
                       std::vector<std::vector<double>>& coef) {
  std::vector<std::vector<char>> seen(coef.size());
  for (std::size_t s = 0; s < coef.size(); ++s) seen[s].assign(coef[s].size(), 0);
  read_csv(path, 4, [&](const auto& f, std::int64_t line) {
    FieldReader r{path, line};
    const auto t = r.integer(f[0]);
    const auto l = r.integer(f[1]);
    const auto e = r.integer(f[2]);
    if (t < 0 || t >= state.T || l < 0 || l >= state.L) r.fail("bad cell");
    auto& v = coef[state.slot(static_cast<std::int32_t>(t),
                              static_cast<std::int32_t>(l))];
    if (e < 0 || e >= static_cast<std::int64_t>(v.size())) {
      r.fail("entry outside the support");
    }
    v[e] = r.real(f[3]);
    seen[state.slot(static_cast<std::int32_t>(t),
                    static_cast<std::int32_t>(l))][e] = 1;
  });
  for (const auto& s : seen) {
    for (char c : s) {
      if (!c) throw DataError(path.string() + ": missing coefficient entries");
    }
  }
}

std::vector<double> parse_real_list(const std::string& key,
                                    const std::string& value) {
  std::vector<double> out;
  if (value.empty()) return out;
  for (auto tok : split_fields(value, ',')) {
    double v = 0.0;
    if (!parse_real(tok, v)) throw DataError("manifest: bad value for " + key);
    out.push_back(v);
  }
  return out;
}

} // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  const LatentState& s = ckpt.state;
  const Hyperparams& hp = ckpt.hp;
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  {
    auto out = open_out(tmp / "manifest.txt");
    out << "format=" << kFormat << '\n'
        << "iteration=" << ckpt.iteration << '\n'
        << "N=" << s.N << '\n'
        << "T=" << s.T << '\n'
        << "K=" << s.K << '\n'
        << "L=" << s.L << '\n'
        << "directed=" << (s.directed ? 1 : 0) << '\n'
        << "alpha=" << join_reals(hp.alpha) << '\n'
        << "c_c=" << join_reals(hp.c_c) << '\n'
        << "c_u=" << join_reals(hp.c_u) << '\n'
        << "hp_d_c=" << format_real(hp.d_c) << '\n'
        << "lambda1=" << format_real(hp.lambda1) << '\n'
        << "lambda0=" << format_real(hp.lambda0) << '\n'
        << "m_shape=" << format_real(hp.m_shape.value_or(s.N)) << '\n'
        << "iterations=" << hp.iterations << '\n'
        << "burn_in=" << hp.burn_in << '\n'
        << "seed=" << hp.seed << '\n'
        << "resample_dc=" << (hp.resample_dc ? 1 : 0) << '\n'
        << "M=" << format_real(s.M) << '\n'
        << "d_c=" << format_real(s.d_c) << '\n'
        << "n_samples=" << ckpt.posterior.n_samples << '\n'
        << "rate_floor_hits=" << ckpt.counters.rate_floor_hits << '\n'
        << "concentration_fallbacks=" << ckpt.counters.concentration_fallbacks
        << '\n'
        << "window_expansions=" << ckpt.counters.window_expansions << '\n';
  }
  write_support(tmp / "support_beta.csv", s.beta_support);
  write_support(tmp / "support_gamma.csv", s.gamma_support);
  write_coefficients(tmp / "beta.csv", s, s.beta);
  write_coefficients(tmp / "gamma.csv", s, s.gamma);
  {
    auto out = open_out(tmp / "pi.csv");
    out << "t,l,i";
    for (std::int32_t k = 0; k < s.K; ++k) out << ",k" << k;
    out << '\n';
    for (std::int32_t t = 0; t < s.T; ++t) {
      for (std::int32_t l = 0; l < s.L; ++l) {
        for (std::int32_t i = 0; i < s.N; ++i) {
          out << t << ',' << l << ',' << i;
          for (double v : s.pi_at(t, l, i)) out << ',' << format_real(v);
          out << '\n';
        }
      }
    }
  }
  {
    auto out = open_out(tmp / "X.csv");
    out << "t,i";
    for (std::int32_t k = 0; k < s.K; ++k) out << ",k" << k;
    out << '\n';
    for (std::int32_t t = 0; t < s.T; ++t) {
      for (std::int32_t i = 0; i < s.N; ++i) {
        out << t << ',' << i;
        for (auto v : s.x_at(t, i)) out << ',' << v;
        out << '\n';
      }
    }
  }
  {
    // Links are not stored here; C rows follow the training view order.
    auto out = open_out(tmp / "C.csv");
    out << "t,entry,cells\n";
    const std::size_t cells = static_cast<std::size_t>(s.K) * s.K;
    for (std::int32_t t = 0; t < s.T; ++t) {
      for (std::size_t e = 0; e * cells < s.C[t].size(); ++e) {
        out << t << ',' << e << ',';
        for (std::size_t c = 0; c < cells; ++c) {
          if (c) out << ' ';
          out << s.C[t][e * cells + c];
        }
        out << '\n';
      }
    }
  }
  {
    auto out = open_out(tmp / "lambda.csv");
    out << "k1,values\n";
    for (std::int32_t k1 = 0; k1 < s.K; ++k1) {
      out << k1 << ',';
      for (std::int32_t k2 = 0; k2 < s.K; ++k2) {
        if (k2) out << ' ';
        out << format_real(s.lambda_at(k1, k2));
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(tmp / "posterior.csv");
    out << "entry,survival_sum\n";
    for (std::size_t e = 0; e < ckpt.posterior.survival_sum.size(); ++e) {
      out << e << ',' << format_real(ckpt.posterior.survival_sum[e]) << '\n';
    }
  }

  fs::path old = dir;
  old += ".old";
  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(tmp, dir);
  fs::remove_all(old);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::map<std::string, std::string> kv;
  {
    const fs::path path = dir / "manifest.txt";
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      const auto t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) {
        throw DataError(path.string() + ": malformed line '" + std::string(t) +
                        "'");
      }
      kv[std::string(t.substr(0, eq))] = std::string(t.substr(eq + 1));
    }
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint manifest lacks " + key);
    return it->second;
  };
  auto get_int = [&](const std::string& key) {
    std::int64_t v = 0;
    if (!parse_int64(get(key), v)) {
      throw DataError("checkpoint manifest: bad integer for " + key);
    }
    return v;
  };
  auto get_real = [&](const std::string& key) {
    double v = 0.0;
    if (!parse_real(get(key), v)) {
      throw DataError("checkpoint manifest: bad number for " + key);
    }
    return v;
  };
  if (get("format") != kFormat) throw DataError("unknown checkpoint format");

  Checkpoint ckpt;
  Hyperparams& hp = ckpt.hp;
  hp.K = static_cast<std::int32_t>(get_int("K"));
  hp.L = static_cast<std::int32_t>(get_int("L"));
  hp.alpha = parse_real_list("alpha", get("alpha"));
  hp.c_c = parse_real_list("c_c", get("c_c"));
  hp.c_u = parse_real_list("c_u", get("c_u"));
  hp.d_c = get_real("hp_d_c");
  hp.lambda1 = get_real("lambda1");
  hp.lambda0 = get_real("lambda0");
  hp.m_shape = get_real("m_shape");
  hp.iterations = static_cast<std::int32_t>(get_int("iterations"));
  hp.burn_in = static_cast<std::int32_t>(get_int("burn_in"));
  hp.seed = static_cast<std::uint64_t>(get_int("seed"));
  hp.resample_dc = get_int("resample_dc") != 0;
  hp.validate();
  ckpt.iteration = get_int("iteration");

  const auto N = static_cast<std::int32_t>(get_int("N"));
  const auto T = static_cast<std::int32_t>(get_int("T"));
  if (N < 1 || T < 1) throw DataError("checkpoint: bad dimensions");
  LatentState s(N, T, hp.K, hp.L, get_int("directed") != 0);
  s.M = get_real("M");
  s.d_c = get_real("d_c");
  s.set_supports(read_support(dir / "support_beta.csv", N, T),
                 read_support(dir / "support_gamma.csv", N, T));
  read_coefficients(dir / "beta.csv", s, s.beta);
  read_coefficients(dir / "gamma.csv", s, s.gamma);

  const std::size_t K = static_cast<std::size_t>(s.K);
  {
    const fs::path path = dir / "pi.csv";
    std::int64_t rows = 0;
    read_csv(path, 3 + K, [&](const auto& f, std::int64_t line) {
      FieldReader r{path, line};
      const auto t = r.integer(f[0]);
      const auto l = r.integer(f[1]);
      const auto i = r.integer(f[2]);
      if (t < 0 || t >= T || l < 0 || l >= s.L || i < 0 || i >= N) {
        r.fail("index out of range");
      }
      auto p = s.pi_at(static_cast<std::int32_t>(t),
                       static_cast<std::int32_t>(l),
                       static_cast<std::int32_t>(i));
      for (std::size_t k = 0; k < K; ++k) p[k] = r.real(f[3 + k]);
      ++rows;
    });
    if (rows != static_cast<std::int64_t>(T) * s.L * N) {
      throw DataError(path.string() + ": wrong number of rows");
    }
  }
  {
    const fs::path path = dir / "X.csv";
    std::int64_t rows = 0;
    read_csv(path, 2 + K, [&](const auto& f, std::int64_t line) {
      FieldReader r{path, line};
      const auto t = r.integer(f[0]);
      const auto i = r.integer(f[1]);
      if (t < 0 || t >= T || i < 0 || i >= N) r.fail("index out of range");
      auto x = s.x_at(static_cast<std::int32_t>(t),
                      static_cast<std::int32_t>(i));
      for (std::size_t k = 0; k < K; ++k) x[k] = r.integer(f[2 + k]);
      ++rows;
    });
    if (rows != static_cast<std::int64_t>(T) * N) {
      throw DataError(path.string() + ": wrong number of rows");
    }
  }
  {
    const fs::path path = dir / "C.csv";
    read_csv(path, 3, [&](const auto& f, std::int64_t line) {
      FieldReader r{path, line};
      const auto t = r.integer(f[0]);
      const auto e = r.integer(f[1]);
      if (t < 0 || t >= T) r.fail("index out of range");
      auto& C = s.C[t];
      if (e != static_cast<std::int64_t>(C.size() / (K * K))) {
        r.fail("entries out of order");
      }
      const auto cells = split_fields(f[2], ' ');
      if (cells.size() != K * K) r.fail("expected K*K cells");
      for (auto c : cells) C.push_back(r.integer(c));
    });
  }
  {
    const fs::path path = dir / "lambda.csv";
    std::int64_t rows = 0;
    read_csv(path, 2, [&](const auto& f, std::int64_t line) {
      FieldReader r{path, line};
      const auto k1 = r.integer(f[0]);
      if (k1 != rows || k1 >= s.K) r.fail("rows out of order");
      const auto vals = split_fields(f[1], ' ');
      if (vals.size() != K) r.fail("expected K values");
      for (std::size_t k2 = 0; k2 < K; ++k2) {
        s.lambda[k1 * K + k2] = r.real(vals[k2]);
      }
      ++rows;
    });
    if (rows != s.K) throw DataError(path.string() + ": wrong number of rows");
  }
  {
    const fs::path path = dir / "posterior.csv";
    read_csv(path, 2, [&](const auto& f, std::int64_t line) {
      FieldReader r{path, line};
      if (r.integer(f[0]) !=
          static_cast<std::int64_t>(ckpt.posterior.survival_sum.size())) {
        r.fail("entries out of order");
      }
      ckpt.posterior.survival_sum.push_back(r.real(f[1]));
    });
  }
  ckpt.posterior.n_samples = get_int("n_samples");
  ckpt.counters.rate_floor_hits = get_int("rate_floor_hits");
  ckpt.counters.concentration_fallbacks = get_int("concentration_fallbacks");
  ckpt.counters.window_expansions = get_int("window_expansions");
  s.check_invariants();
  ckpt.state = std::move(s);
  return ckpt;
}

} // namespace rdbn
