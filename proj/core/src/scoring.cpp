#include "cap/scoring.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cap/errors.h"
#include "cap/parallel.h"

namespace cap {

namespace {

ScoredQuery cosine_score(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na >= kNormFloor) || !(nb >= kNormFloor)) return {2.0, true};
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return {1.0 - c, false};
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

ScoredQuery score_with_neighbors(const ModelParams& model, const Vector& z, const Matrix& neighbor_rows) {
  const ForwardOutput out = forward(model, z, neighbor_rows);
  return cosine_score(out.z_hat, out.z_normal);
}

ScoredQuery anomaly_score(const ModelParams& model, const MemoryBank& bank, const Vector& query, std::size_t k) {
  return score_with_neighbors(model, query, top_k_neighbors(bank, query, k).matrix);
}

ScoredQuery baseline_score_with_neighbors(const Vector& z, const Matrix& neighbor_rows) {
  const Vector mean = neighbor_rows.colwise().mean().transpose();
  return cosine_score(z, mean);
}

ScoredQuery baseline_score_no_adaptation(const MemoryBank& bank, const Vector& query, std::size_t k) {
  return baseline_score_with_neighbors(query, top_k_neighbors(bank, query, k).matrix);
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DataError("auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks are half-integers, so the rank sum is exact in double.
  double rank_sum_pos = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum_pos += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw ConfigError("auroc: both classes must be present");
  const double p = static_cast<double>(positives);
  const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

std::vector<NeighborSet> query_neighbors(const MemoryBank& bank, const MemoryBank& queries, std::size_t k,
                                         std::size_t workers) {
  if (queries.dim() != bank.dim()) throw DataError("query set dimension does not match bank dimension");
  std::vector<NeighborSet> out(queries.size());
  parallel_for(
      queries.size(), [&](std::size_t i) { out[i] = top_k_neighbors(bank, queries.row(i), k); }, workers);
  return out;
}

ClassSummary summarize(std::span<const double> scores) {
  ClassSummary s;
  s.count = scores.size();
  if (scores.empty()) return s;
  s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  double var = 0.0;
  for (double v : scores) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(scores.size()));
  return s;
}

ScoreReport evaluate(const ModelParams& model, const MemoryBank& bank, const FeatureSet& test, std::size_t k,
                     std::size_t workers) {
  const MemoryBank& queries = test.features;
  ScoreReport report;
  report.ids = queries.ids();
  report.labels = test.labels;
  report.scores.resize(queries.size());
  report.degenerate.resize(queries.size());
  report.baseline_scores.resize(queries.size());

  parallel_for(
      queries.size(),
      [&](std::size_t i) {
        const Vector z = queries.row(i);
        const NeighborSet nb = top_k_neighbors(bank, z, k);
        const ScoredQuery adapted = score_with_neighbors(model, z, nb.matrix);
        report.scores[i] = adapted.score;
        report.degenerate[i] = adapted.degenerate ? 1 : 0;
        report.baseline_scores[i] = baseline_score_with_neighbors(z, nb.matrix).score;
      },
      workers);

  std::vector<double> normal, anomaly, base_normal, base_anomaly;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const bool is_anomaly = report.labels && (*report.labels)[i];
    (is_anomaly ? anomaly : normal).push_back(report.scores[i]);
    (is_anomaly ? base_anomaly : base_normal).push_back(report.baseline_scores[i]);
  }
  report.normal = summarize(normal);
  report.anomaly = summarize(anomaly);
  report.baseline_normal = summarize(base_normal);
  report.baseline_anomaly = summarize(base_anomaly);
  if (report.labels && !normal.empty() && !anomaly.empty()) {
    report.auroc = auroc(report.scores, *report.labels);
    report.baseline_auroc = auroc(report.baseline_scores, *report.labels);
  }
  return report;
}

std::string score_csv(const ScoreReport& report) {
  std::ostringstream os;
  os << (report.labels ? "id,score,label\n" : "id,score\n");
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    os << report.ids[i] << ',' << format_double(report.scores[i]);
    if (report.labels) os << ',' << static_cast<int>((*report.labels)[i]);
    os << '\n';
  }
  return os.str();
}

std::string summary_text(const ScoreReport& report) {
  std::ostringstream os;
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("none"); };
  os << "samples=" << report.scores.size() << '\n';
  os << "auroc=" << opt(report.auroc) << '\n';
  os << "baseline_auroc=" << opt(report.baseline_auroc) << '\n';
  os << "normal_count=" << report.normal.count << '\n';
  os << "normal_mean=" << format_double(report.normal.mean) << '\n';
  os << "normal_std=" << format_double(report.normal.stddev) << '\n';
  os << "anomaly_count=" << report.anomaly.count << '\n';
  os << "anomaly_mean=" << format_double(report.anomaly.mean) << '\n';
  os << "anomaly_std=" << format_double(report.anomaly.stddev) << '\n';
  os << "baseline_normal_mean=" << format_double(report.baseline_normal.mean) << '\n';
  os << "baseline_anomaly_mean=" << format_double(report.baseline_anomaly.mean) << '\n';
  os << "degenerate=" << std::count(report.degenerate.begin(), report.degenerate.end(), 1) << '\n';
  return os.str();
}

}  // namespace cap
