#include "cap/synthetic.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "cap/errors.h"

namespace cap {

namespace {

Vector gaussian_vector(std::mt19937_64& rng, std::size_t d, double stddev) {
  std::normal_distribution<double> g(0.0, stddev);
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(rng);
  return v;
}

}  // namespace

SyntheticInstance generate_instance(const SyntheticSpec& spec) {
  if (spec.dim < 2) throw ConfigError("synthetic: d must be >= 2");
  if (spec.n_train < 1 || spec.n_test_normal < 1 || spec.n_test_anomaly < 1 || spec.n_modes < 1) {
    throw ConfigError("synthetic: all counts must be >= 1");
  }
  if (spec.centre_norm < 0.0) throw ConfigError("synthetic: centre_norm must be non-negative");
  if (spec.anomaly_offset < 0.0) throw ConfigError("synthetic: anomaly_offset must be non-negative");

  std::mt19937_64 rng(spec.seed);
  const std::size_t d = spec.dim;
  const Vector shift = Vector::Constant(static_cast<Eigen::Index>(d), spec.positive_shift);

  std::vector<Vector> centres;
  std::vector<Vector> directions;
  for (std::size_t m = 0; m < spec.n_modes; ++m) {
    Vector c = shift + gaussian_vector(rng, d, spec.mode_spread);
    if (spec.centre_norm > 0.0) c *= spec.centre_norm / c.norm();
    centres.push_back(c);
    Vector u = gaussian_vector(rng, d, 1.0);
    directions.push_back(u / u.norm());
  }

  std::uniform_int_distribution<std::size_t> pick_mode(0, spec.n_modes - 1);
  const auto normal_sample = [&] {
    const std::size_t m = pick_mode(rng);
    return Vector(centres[m] + gaussian_vector(rng, d, spec.covariance_scale));
  };
  const auto anomaly_sample = [&] {
    const std::size_t m = pick_mode(rng);
    return Vector(centres[m] + spec.anomaly_offset * directions[m] + gaussian_vector(rng, d, spec.covariance_scale));
  };

  std::vector<Vector> train;
  std::vector<std::string> train_ids;
  for (std::size_t i = 0; i < spec.n_train; ++i) {
    train.push_back(normal_sample());
    train_ids.push_back("train-" + std::to_string(i));
  }
  std::vector<Vector> test;
  std::vector<std::string> test_ids;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < spec.n_test_normal; ++i) {
    test.push_back(normal_sample());
    test_ids.push_back("test-normal-" + std::to_string(i));
    labels.push_back(0);
  }
  for (std::size_t i = 0; i < spec.n_test_anomaly; ++i) {
    test.push_back(anomaly_sample());
    test_ids.push_back("test-anomaly-" + std::to_string(i));
    labels.push_back(1);
  }

  Provenance prov{{"generator", "gaussian_cluster"},
                  {"dim", std::to_string(spec.dim)},
                  {"n_modes", std::to_string(spec.n_modes)},
                  {"anomaly_offset", std::to_string(spec.anomaly_offset)},
                  {"covariance_scale", std::to_string(spec.covariance_scale)},
                  {"mode_spread", std::to_string(spec.mode_spread)},
                  {"positive_shift", std::to_string(spec.positive_shift)},
                  {"centre_norm", std::to_string(spec.centre_norm)},
                  {"seed", std::to_string(spec.seed)}};
  if (!spec.provenance_name.empty()) prov["suite"] = spec.provenance_name;
  return SyntheticInstance{spec, build_bank(train, std::move(train_ids), prov),
                           FeatureSet{build_bank(test, std::move(test_ids), prov), std::move(labels)}};
}

SyntheticInstance gaussian_cluster_instance(std::size_t d, std::size_t n_train, std::size_t n_test_normal,
                                            std::size_t n_test_anomaly, std::size_t n_modes, double anomaly_offset,
                                            std::uint64_t seed) {
  SyntheticSpec spec;
  spec.dim = d;
  spec.n_train = n_train;
  spec.n_test_normal = n_test_normal;
  spec.n_test_anomaly = n_test_anomaly;
  spec.n_modes = n_modes;
  spec.anomaly_offset = anomaly_offset;
  spec.seed = seed;
  if (!(anomaly_offset > 0.0)) throw ConfigError("synthetic: anomaly_offset must be > 0");
  return generate_instance(spec);
}

SyntheticSpec standard_suite_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.provenance_name = std::string(kStandardSuiteName);
  return spec;
}

NeighborSet knn_oracle(const MemoryBank& bank, std::span<const double> query, std::size_t k,
                       std::optional<std::size_t> exclude) {
  const FloatMatrix& items = bank.items();
  const auto n = static_cast<std::size_t>(items.rows());
  const auto d = static_cast<std::size_t>(items.cols());
  double qq = 0.0;
  for (double v : query) qq += v * v;
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t j = 0; j < n; ++j) {
    if (exclude && *exclude == j) continue;
    double dot = 0.0, mm = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double m = items(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
      dot += m * query[c];
      mm += m * m;
    }
    double s = dot / (std::sqrt(mm) * std::sqrt(qq));
    s = std::min(1.0, std::max(-1.0, s));
    all.emplace_back(s, j);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  NeighborSet out;
  out.matrix.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < k && r < all.size(); ++r) {
    out.indices.push_back(all[r].second);
    out.similarities.push_back(all[r].first);
    for (std::size_t c = 0; c < d; ++c) {
      out.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          items(static_cast<Eigen::Index>(all[r].second), static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

double pairwise_auroc_oracle(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  double wins = 0.0, ties = 0.0, pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) ++pos; else ++neg;
  }
  if (pos == 0.0 || neg == 0.0) throw ConfigError("pairwise_auroc_oracle: both classes must be present");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) ties += 1.0;
    }
  }
  return (wins + 0.5 * ties) / (pos * neg);
}

}  // namespace cap
