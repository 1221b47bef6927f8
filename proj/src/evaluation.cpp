#include "rdbn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "rdbn/errors.hpp"
#include "rdbn/text.hpp"

namespace rdbn {

std::vector<double> predict_probs(const PosteriorAccumulator& posterior,
                                  const HoldoutMask& mask) {
  if (posterior.n_samples < 1) {
    throw ParameterError("predict_probs: no retained posterior samples");
  }
  if (posterior.survival_sum.size() != mask.entries.size()) {
    throw ParameterError("predict_probs: posterior does not match the mask");
  }
  std::vector<double> p(mask.entries.size());
  const auto n = static_cast<double>(posterior.n_samples);
  for (std::size_t e = 0; e < p.size(); ++e) {
    p[e] = std::clamp(1.0 - posterior.survival_sum[e] / n, 0.0, 1.0);
  }
  return p;
}

std::vector<double> predict_probs(std::span<const LatentState> samples,
                                  const HoldoutMask& mask) {
  PosteriorAccumulator acc;
  acc.survival_sum.assign(mask.entries.size(), 0.0);
  for (const LatentState& s : samples) acc.add(s, mask);
  return predict_probs(acc, mask);
}

double auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw ParameterError("auc: labels and scores differ in length");
  }
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::int64_t n_pos = 0;
  for (std::size_t a = 0; a < n;) {
    std::size_t b = a;
    while (b < n && scores[order[b]] == scores[order[a]]) ++b;
    const double midrank = 0.5 * static_cast<double>(a + 1 + b);
    for (std::size_t r = a; r < b; ++r) {
      if (labels[order[r]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    a = b;
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ParameterError("auc is undefined without both positive and negative labels");
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double average_precision(std::span<const int> labels,
                         std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw ParameterError("average_precision: labels and scores differ in length");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  double sum = 0.0;
  std::int64_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  if (hits == 0) {
    throw ParameterError("average_precision is undefined without positive labels");
  }
  return sum / static_cast<double>(hits);
}

PredictionReport make_report(const HoldoutMask& mask,
                             std::span<const double> probs,
                             std::int64_t n_samples) {
  if (probs.size() != mask.entries.size()) {
    throw ParameterError("make_report: probabilities do not match the mask");
  }
  PredictionReport report;
  report.n_samples = n_samples;
  std::vector<int> labels;
  for (std::size_t e = 0; e < probs.size(); ++e) {
    const HoldoutEntry& h = mask.entries[e];
    report.entries.push_back({h.t, h.dyad.i, h.dyad.j, h.label, probs[e]});
    labels.push_back(h.label);
  }
  report.auc = auc(labels, probs);
  report.avg_precision = average_precision(labels, probs);
  return report;
}

PredictionReport evaluate(const PosteriorAccumulator& posterior,
                          const HoldoutMask& mask) {
  const auto probs = predict_probs(posterior, mask);
  return make_report(mask, probs, posterior.n_samples);
}

void save_predictions(const PredictionReport& report,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "t,i,j,label,prob\n";
  for (const auto& e : report.entries) {
    out << e.t << ',' << e.i << ',' << e.j << ',' << e.label << ','
        << format_real(e.prob) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

void save_summary(const PredictionReport& report,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "auc,avg_precision,n_entries,n_samples\n"
      << format_real(report.auc) << ',' << format_real(report.avg_precision)
      << ',' << report.entries.size() << ',' << report.n_samples << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

PredictionReport load_predictions(const std::filesystem::path& path,
                                  std::int64_t n_samples) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "t,i,j,label,prob") {
    throw DataError(path.string() + ":1: expected header t,i,j,label,prob");
  }
  HoldoutMask mask;
  std::vector<double> probs;
  std::int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_fields(trim(line), ',');
    std::int64_t t = 0, i = 0, j = 0, label = 0;
    double p = 0.0;
    if (f.size() != 5 || !parse_int64(f[0], t) || !parse_int64(f[1], i) ||
        !parse_int64(f[2], j) || !parse_int64(f[3], label) ||
        !parse_real(f[4], p) || (label != 0 && label != 1) || !(p >= 0.0) ||
        p > 1.0) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed prediction row");
    }
    mask.entries.push_back({static_cast<std::int32_t>(t),
                            {static_cast<std::int32_t>(i),
                             static_cast<std::int32_t>(j)},
                            static_cast<int>(label)});
    probs.push_back(p);
  }
  return make_report(mask, probs, n_samples);
}

} // namespace rdbn
