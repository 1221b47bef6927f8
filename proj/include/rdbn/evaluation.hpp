#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rdbn/inference.hpp"
#include "rdbn/model.hpp"
#include "rdbn/network.hpp"

namespace rdbn {

struct PredictionEntry {
  std::int32_t t = 0;
  std::int32_t i = 0;
  std::int32_t j = 0;
  int label = 0;
  double prob = 0.0;
};

struct PredictionReport {
  std::vector<PredictionEntry> entries;  // 1:1 with the mask
  double auc = 0.0;
  double avg_precision = 0.0;
  std::int64_t n_samples = 0;
};

/// p = 1 - (posterior mean of exp(-rate)) per held-out entry.
std::vector<double> predict_probs(const PosteriorAccumulator& posterior,
                                  const HoldoutMask& mask);
std::vector<double> predict_probs(std::span<const LatentState> samples,
                                  const HoldoutMask& mask);

/// Mann-Whitney AUC with midranks for ties.
double auc(std::span<const int> labels, std::span<const double> scores);
/// Mean of precision@rank over positives, descending scores, ties kept in
/// input order.
double average_precision(std::span<const int> labels,
                         std::span<const double> scores);

PredictionReport evaluate(const PosteriorAccumulator& posterior,
                          const HoldoutMask& mask);
PredictionReport make_report(const HoldoutMask& mask,
                             std::span<const double> probs,
                             std::int64_t n_samples);

/// Header `t,i,j,label,prob`.
void save_predictions(const PredictionReport& report,
                      const std::filesystem::path& path);
/// Header `auc,avg_precision,n_entries,n_samples` and one row.
void save_summary(const PredictionReport& report,
                  const std::filesystem::path& path);
/// Reads a predictions file back; metrics are recomputed.
PredictionReport load_predictions(const std::filesystem::path& path,
                                  std::int64_t n_samples = 0);

} // namespace rdbn
