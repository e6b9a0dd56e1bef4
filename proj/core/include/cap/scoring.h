#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cap/feature_bank.h"
#include "cap/model.h"

namespace cap {

struct ScoredQuery {
  double score = 0.0;       // in [0, 2]
  bool degenerate = false;  // |z_hat| or |z_normal| under the norm floor; score forced to 2
};

// 1 - cos(z_hat, z_normal) for a query whose neighbours are already known.
ScoredQuery score_with_neighbors(const ModelParams& model, const Vector& z, const Matrix& neighbor_rows);

// Test-time rule: top-k over the whole bank, no exclusion.
ScoredQuery anomaly_score(const ModelParams& model, const MemoryBank& bank, const Vector& query, std::size_t k);

// 1 - cos(z, mean of the k pretrained neighbours).
ScoredQuery baseline_score_no_adaptation(const MemoryBank& bank, const Vector& query, std::size_t k);
ScoredQuery baseline_score_with_neighbors(const Vector& z, const Matrix& neighbor_rows);

// Mann-Whitney AUROC with midranks. Label 1 = anomaly = positive class, and a
// higher score means more anomalous. Throws ConfigError without both classes.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Neighbour sets for every row of `queries` against `bank` (test rule).
std::vector<NeighborSet> query_neighbors(const MemoryBank& bank, const MemoryBank& queries, std::size_t k,
                                         std::size_t workers);

struct ClassSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

ClassSummary summarize(std::span<const double> scores);

struct ScoreReport {
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::vector<std::uint8_t> degenerate;
  std::optional<std::vector<std::uint8_t>> labels;
  std::optional<double> auroc;

  std::vector<double> baseline_scores;
  std::optional<double> baseline_auroc;

  // Without labels every sample is counted as normal.
  ClassSummary normal;
  ClassSummary anomaly;
  ClassSummary baseline_normal;
  ClassSummary baseline_anomaly;
};

// Scores every query in input order; AUROC is filled only when labels contain
// both classes.
ScoreReport evaluate(const ModelParams& model, const MemoryBank& bank, const FeatureSet& test, std::size_t k,
                     std::size_t workers = 1);

// "id,score[,label]" rows with a header line.
std::string score_csv(const ScoreReport& report);
// key=value lines: auroc, baseline_auroc, per-class means and counts.
std::string summary_text(const ScoreReport& report);

}  // namespace cap
