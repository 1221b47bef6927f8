// rdbn: simulate, fit, predict, eval, diagnose, stats.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "config.hpp"
#include "rdbn/checkpoint.hpp"
#include "rdbn/diagnostics.hpp"
#include "rdbn/errors.hpp"
#include "rdbn/evaluation.hpp"
#include "rdbn/inference.hpp"
#include "rdbn/model.hpp"
#include "rdbn/network.hpp"
#include "rdbn/text.hpp"

namespace fs = std::filesystem;
using namespace rdbn;
using rdbn::cli::ConfigError;
using rdbn::cli::RunConfig;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Flag values as typed on the command line, copied into the RunConfig.
struct Flags {
  std::string config;
  std::map<std::string, std::string> values;
  bool resume = false;
  bool undirected = false;
};

void add_value_flag(CLI::App* app, Flags& flags, const std::string& flag,
                    const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&flags, key](const std::string& v) { flags.values[key] = v; },
      help);
}

void add_model_flags(CLI::App* app, Flags& flags) {
  add_value_flag(app, flags, "--K", "K", "number of communities");
  add_value_flag(app, flags, "--L", "L", "number of layers");
  add_value_flag(app, flags, "--alpha", "alpha",
                 "Dirichlet concentration at the first cell (one value or K values)");
  add_value_flag(app, flags, "--seed", "seed", "random seed");
}

RunConfig build_config(const Flags& flags) {
  RunConfig cfg = flags.config.empty() ? RunConfig{} : RunConfig::load(flags.config);
  for (const auto& [key, value] : flags.values) cfg.set(key, value);
  return cfg;
}

fs::path required_path(const RunConfig& cfg, const std::string& key) {
  const std::string v = cfg.get_string(key, "");
  if (v.empty()) throw ConfigError("missing required --" + key);
  return v;
}

void require_exists(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("input not found: " + p.string());
}

std::int32_t threads_of(const RunConfig& cfg) {
  const auto n = cfg.get_int("threads", 1);
  if (n < 1 || n > 1024) throw ConfigError("threads must be between 1 and 1024");
  return static_cast<std::int32_t>(n);
}

std::int64_t manifest_int(const fs::path& manifest, const std::string& key) {
  std::ifstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) {
      std::int64_t v = 0;
      if (parse_int64(std::string_view(line).substr(key.size() + 1), v)) return v;
    }
  }
  throw DataError(manifest.string() + ": missing " + key);
}

PredictionReport unscored_report(const HoldoutMask& mask,
                                 const PosteriorAccumulator& posterior) {
  const auto probs = predict_probs(posterior, mask);
  PredictionReport r;
  r.n_samples = posterior.n_samples;
  for (std::size_t e = 0; e < probs.size(); ++e) {
    const auto& h = mask.entries[e];
    r.entries.push_back({h.t, h.dyad.i, h.dyad.j, h.label, probs[e]});
  }
  return r;
}

// Writes the summary when both metrics are defined; returns false otherwise.
bool try_summary(PredictionReport& report, const fs::path& path) {
  std::vector<int> labels;
  std::vector<double> probs;
  for (const auto& e : report.entries) {
    labels.push_back(e.label);
    probs.push_back(e.prob);
  }
  try {
    report.auc = auc(labels, probs);
    report.avg_precision = average_precision(labels, probs);
  } catch (const ParameterError& e) {
    std::cerr << "warning: " << e.what() << "; no summary written\n";
    return false;
  }
  save_summary(report, path);
  return true;
}

int run_simulate(const RunConfig& cfg, std::string& stage) {
  stage = "configuration";
  const fs::path out = required_path(cfg, "out");
  Hyperparams hp = cfg.hyperparams();
  const auto N = cfg.get_int("nodes", 40);
  const auto T = cfg.get_int("steps", 5);
  if (N < 2 || N > 1'000'000 || T < 1 || T > 100'000) {
    throw ConfigError("need 2 <= nodes and 1 <= steps");
  }
  const bool directed = cfg.get_bool("directed", true);
  hp = hp.resolved(static_cast<std::int32_t>(N));
  hp.validate();
  SimulationOptions opts;
  if (cfg.has("sim_M")) opts.M = cfg.get_real("sim_M", 0.0);
  if (cfg.has("sim_lambda_diag") || cfg.has("sim_lambda_offdiag")) {
    const double diag = cfg.get_real("sim_lambda_diag", 1.0);
    const double off = cfg.get_real("sim_lambda_offdiag", 1.0);
    std::vector<double> lambda(static_cast<std::size_t>(hp.K) * hp.K, off);
    for (std::int32_t k = 0; k < hp.K; ++k) lambda[static_cast<std::size_t>(k) * hp.K + k] = diag;
    opts.lambda = lambda;
  }

  stage = "simulation";
  Simulation sim = forward_simulate(hp, static_cast<std::int32_t>(N),
                                    static_cast<std::int32_t>(T), directed, opts,
                                    hp.seed);
  stage = "writing output";
  fs::create_directories(out);
  save_edge_list(sim.network, out / "network.txt");
  Checkpoint truth;
  truth.hp = hp;
  truth.state = std::move(sim.state);
  save_checkpoint(out / "truth", truth);
  const DatasetStats st = dataset_stats(sim.network);
  std::cout << "simulated N=" << st.n_nodes << " T=" << st.n_steps
            << " N_E=" << st.n_links << " -> " << (out / "network.txt").string()
            << '\n';
  return kOk;
}

int run_fit(const RunConfig& cfg, bool resume, std::string& stage) {
  stage = "configuration";
  const fs::path input = required_path(cfg, "input");
  const fs::path out = required_path(cfg, "out");
  require_exists(input);
  const Hyperparams hp_raw = cfg.hyperparams();
  const double holdout = cfg.get_real("holdout", 0.1);
  if (!(holdout >= 0.0 && holdout < 1.0)) {
    throw ConfigError("holdout must be in [0, 1)");
  }
  const auto every = cfg.get_int("checkpoint_every", 0);
  if (every < 0 || every > 1'000'000'000) {
    throw ConfigError("checkpoint_every must be non-negative");
  }

  stage = "loading input";
  const DynamicNetwork net = load_edge_list(input);
  const Hyperparams hp = hp_raw.resolved(net.n_nodes);
  hp.validate();

  stage = "holdout split";
  HoldoutSplit split;
  if (holdout > 0.0) {
    split = split_holdout(net, holdout, hp.seed);
  } else {
    split.training = TrainingView(net);
  }
  fs::create_directories(out);
  save_mask(split.mask, out / "mask.csv");

  stage = "fitting";
  FitOptions opts;
  opts.sampler.threads = threads_of(cfg);
  opts.checkpoint_dir = out / "checkpoint";
  opts.checkpoint_every = static_cast<std::int32_t>(every);
  opts.resume = resume;

  const fs::path progress_path = out / "progress.csv";
  std::ofstream progress;
  opts.on_iteration = [&](const IterationRecord& rec) {
    if (!progress.is_open()) {
      // On resume keep the rows written before the checkpoint.
      std::vector<std::string> kept;
      if (rec.iteration > 1) {
        std::ifstream old(progress_path);
        std::string line;
        std::getline(old, line);
        while (std::getline(old, line)) {
          std::int64_t it = 0;
          const auto f = split_fields(line, ',');
          if (!f.empty() && parse_int64(f[0], it) && it < rec.iteration) {
            kept.push_back(line);
          }
        }
      }
      progress.open(progress_path, std::ios::trunc);
      if (!progress) throw DataError("cannot write " + progress_path.string());
      progress << "iter,seconds,train_loglik,M,mean_beta,mean_gamma\n";
      for (const auto& l : kept) progress << l << '\n';
    }
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.6f", rec.seconds);
    progress << rec.iteration << ',' << secs << ','
             << format_real(rec.train_loglik) << ',' << format_real(rec.M) << ','
             << format_real(rec.mean_beta) << ',' << format_real(rec.mean_gamma)
             << '\n';
    progress.flush();
  };
  FitResult result = fit(split.training, split.mask, hp, opts);

  stage = "writing predictions";
  if (!split.mask.entries.empty()) {
    PredictionReport report = unscored_report(split.mask, result.posterior);
    save_predictions(report, out / "predictions.csv");
    if (try_summary(report, out / "summary.csv")) {
      std::cout << "auc=" << format_real(report.auc)
                << " avg_precision=" << format_real(report.avg_precision) << '\n';
    }
  }
  std::cout << "fit done: iterations=" << hp.iterations
            << " retained_samples=" << result.posterior.n_samples
            << " rate_floor_hits=" << result.counters.rate_floor_hits
            << " concentration_fallbacks=" << result.counters.concentration_fallbacks
            << " window_expansions=" << result.counters.window_expansions << '\n';
  return kOk;
}

int run_predict(const RunConfig& cfg, std::string& stage) {
  stage = "configuration";
  const fs::path input = required_path(cfg, "input");
  const fs::path out = cfg.get_string("out", input.string());
  require_exists(input / "checkpoint" / "manifest.txt");
  require_exists(input / "mask.csv");
  stage = "loading fit";
  const Checkpoint ckpt = load_checkpoint(input / "checkpoint");
  const HoldoutMask mask = load_mask(input / "mask.csv");
  stage = "prediction";
  PredictionReport report = unscored_report(mask, ckpt.posterior);
  fs::create_directories(out);
  save_predictions(report, out / "predictions.csv");
  std::cout << "wrote " << report.entries.size() << " predictions from "
            << report.n_samples << " samples\n";
  return kOk;
}

int run_eval(const RunConfig& cfg, std::string& stage) {
  stage = "configuration";
  fs::path input = required_path(cfg, "input");
  std::int64_t n_samples = 0;
  fs::path dir = input;
  if (fs::is_directory(input)) {
    input = input / "predictions.csv";
    if (fs::exists(dir / "checkpoint" / "manifest.txt")) {
      n_samples = manifest_int(dir / "checkpoint" / "manifest.txt", "n_samples");
    }
  } else {
    dir = input.parent_path();
  }
  require_exists(input);
  const fs::path out = cfg.get_string("out", dir.string());
  stage = "evaluation";
  const PredictionReport report = load_predictions(input, n_samples);
  fs::create_directories(out);
  save_summary(report, out / "summary.csv");
  std::cout << "auc=" << format_real(report.auc)
            << " avg_precision=" << format_real(report.avg_precision)
            << " n_entries=" << report.entries.size() << '\n';
  return kOk;
}

int run_diagnose(const RunConfig& cfg, std::string& stage) {
  stage = "configuration";
  const fs::path out = required_path(cfg, "out");
  const std::string input = cfg.get_string("input", "");
  if (!input.empty()) require_exists(fs::path(input) / "checkpoint" / "manifest.txt");
  const auto rounds = cfg.get_int("geweke_rounds", 5000);
  if (rounds != 0 && (rounds < 2 || rounds > 100'000'000)) {
    throw ConfigError("geweke_rounds must be 0 (skip) or at least 2");
  }
  fs::create_directories(out);

  int status = kOk;
  if (rounds > 0) {
    stage = "geweke check";
    Hyperparams hp = cfg.hyperparams();
    if (!cfg.has("K")) hp.K = 2;
    if (!cfg.has("L")) hp.L = 2;
    if (!cfg.has("alpha")) hp.alpha.clear();
    if (!cfg.has("c_c")) hp.c_c.clear();
    if (!cfg.has("c_u")) hp.c_u.clear();
    GewekeConfig gc;
    gc.n_rounds = static_cast<std::int32_t>(rounds);
    gc.sampler.threads = threads_of(cfg);
    const GewekeReport report = geweke_check(hp, gc, hp.seed);
    save_geweke_report(report, out / "geweke.csv");
    for (const auto& s : report.statistics) {
      std::cout << "geweke " << s.name << " z=" << format_real(s.z) << '\n';
    }
    const bool ok = report.passed(gc.z_threshold);
    std::cout << "geweke " << (ok ? "PASS" : "FAIL") << " max|z|="
              << format_real(report.max_abs_z()) << '\n';
  }
  if (!input.empty()) {
    stage = "exports";
    const Checkpoint ckpt = load_checkpoint(fs::path(input) / "checkpoint");
    const auto layer = cfg.get_int("heatmap_layer", 0);
    if (layer < 0 || layer >= ckpt.state.L) throw ConfigError("heatmap_layer out of range");
    const auto nodes = std::min<std::int64_t>(cfg.get_int("heatmap_nodes", 30), ckpt.state.N);
    if (nodes < 0) throw ConfigError("heatmap_nodes must be non-negative");
    export_membership_heatmap(ckpt.state, static_cast<std::int32_t>(layer), 0,
                              static_cast<std::int32_t>(nodes), out / "heatmap.csv");
    export_propagation_summary(ckpt.state, out / "propagation.csv");
    std::cout << "wrote heatmap.csv and propagation.csv\n";
  }
  return status;
}

int run_stats(const RunConfig& cfg, std::string& stage) {
  stage = "configuration";
  const fs::path input = required_path(cfg, "input");
  require_exists(input);
  stage = "loading input";
  const DynamicNetwork net = load_edge_list(input);
  const DatasetStats st = dataset_stats(net);
  std::cout << "N=" << st.n_nodes << " T=" << st.n_steps << " N_E=" << st.n_links
            << " S%=" << format_real(st.sparsity_percent)
            << " S%(N^2T)=" << format_real(st.sparsity_percent_square) << '\n';
  const std::string out = cfg.get_string("out", "");
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "stats.csv");
    if (!f) throw DataError("cannot write stats.csv");
    f << "N,T,N_E,sparsity_percent,sparsity_percent_square\n"
      << st.n_nodes << ',' << st.n_steps << ',' << st.n_links << ','
      << format_real(st.sparsity_percent) << ','
      << format_real(st.sparsity_percent_square) << '\n';
  }
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent Dirichlet belief network for dynamic relational data"};
  app.require_subcommand(1);
  Flags flags;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "key = value settings file");
    add_value_flag(sub, flags, "--input", "input", "input path");
    add_value_flag(sub, flags, "--out", "out", "output directory");
    add_value_flag(sub, flags, "--threads", "threads", "worker threads");
  };

  auto* simulate = app.add_subcommand("simulate", "draw a network from the prior");
  common(simulate);
  add_model_flags(simulate, flags);
  add_value_flag(simulate, flags, "--nodes", "nodes", "number of nodes");
  add_value_flag(simulate, flags, "--steps", "steps", "number of time steps");
  simulate->add_flag("--undirected", flags.undirected, "simulate an undirected network");

  auto* fit_cmd = app.add_subcommand("fit", "run the Gibbs sampler");
  common(fit_cmd);
  add_model_flags(fit_cmd, flags);
  add_value_flag(fit_cmd, flags, "--iterations", "iterations", "Gibbs iterations");
  add_value_flag(fit_cmd, flags, "--burn-in", "burn_in", "discarded iterations");
  add_value_flag(fit_cmd, flags, "--holdout", "holdout", "held-out dyad fraction");
  add_value_flag(fit_cmd, flags, "--checkpoint-every", "checkpoint_every",
                 "checkpoint interval in iterations (0: final only)");
  fit_cmd->add_flag("--resume", flags.resume, "continue from the saved checkpoint");

  auto* predict = app.add_subcommand("predict", "link probabilities from a fit");
  common(predict);
  auto* eval = app.add_subcommand("eval", "AUC and average precision");
  common(eval);

  auto* diagnose = app.add_subcommand("diagnose", "Geweke check and exports");
  common(diagnose);
  add_model_flags(diagnose, flags);
  add_value_flag(diagnose, flags, "--rounds", "geweke_rounds",
                 "Geweke rounds (0 skips the check)");
  add_value_flag(diagnose, flags, "--layer", "heatmap_layer", "heatmap layer");
  add_value_flag(diagnose, flags, "--nodes", "heatmap_nodes", "heatmap node count");

  auto* stats = app.add_subcommand("stats", "dataset summary");
  common(stats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  std::string stage = "configuration";
  try {
    if (flags.undirected) flags.values["directed"] = "false";
    const RunConfig cfg = build_config(flags);
    if (command == "simulate") return run_simulate(cfg, stage);
    if (command == "fit") return run_fit(cfg, flags.resume, stage);
    if (command == "predict") return run_predict(cfg, stage);
    if (command == "eval") return run_eval(cfg, stage);
    if (command == "diagnose") return run_diagnose(cfg, stage);
    if (command == "stats") return run_stats(cfg, stage);
  } catch (const ConfigError& e) {
    std::cerr << "rdbn " << command << ": " << stage << ": " << e.what() << '\n';
    return kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "rdbn " << command << ": " << stage << ": " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "rdbn " << command << ": " << stage << ": " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "rdbn " << command << ": " << stage << ": " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "rdbn " << command << ": " << stage << ": " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
