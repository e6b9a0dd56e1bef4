#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "cap/feature_bank.h"

namespace cap {

struct SyntheticSpec {
  std::size_t dim = 64;
  std::size_t n_train = 2000;
  std::size_t n_test_normal = 500;
  std::size_t n_test_anomaly = 500;
  std::size_t n_modes = 3;
  double anomaly_offset = 6.0;
  double covariance_scale = 1.0;  // per-coordinate std of the within-mode noise
  double mode_spread = 4.0;       // std of mode centres around the common offset
  double positive_shift = 4.0;    // common offset added to every coordinate
  // When > 0, every mode centre is rescaled to this norm so that no mode is
  // closer to the origin (and hence easier to confuse with anomalies) than another.
  double centre_norm = 90.0;
  std::uint64_t seed = 0;
  std::string provenance_name;  // recorded as "suite" when non-empty
};

struct SyntheticInstance {
  SyntheticSpec spec;
  MemoryBank train;
  FeatureSet test;  // normals first, then anomalies; labels always present
};

SyntheticInstance generate_instance(const SyntheticSpec& spec);

SyntheticInstance gaussian_cluster_instance(std::size_t d, std::size_t n_train, std::size_t n_test_normal,
                                            std::size_t n_test_anomaly, std::size_t n_modes, double anomaly_offset,
                                            std::uint64_t seed);

// The versioned standard suite: D=64, 3 modes, offset 6, 2000 train,
// 500 + 500 test. Seeds 0..9 form the published suite.
inline constexpr std::string_view kStandardSuiteName = "synth-std-v1";
SyntheticSpec standard_suite_spec(std::uint64_t seed);

// Reference implementations for tests. They deliberately share no code with
// the feature bank or the scoring module.

// Full sort of double-precision cosine similarities, ties by ascending index.
NeighborSet knn_oracle(const MemoryBank& bank, std::span<const double> query, std::size_t k,
                       std::optional<std::size_t> exclude = std::nullopt);

// (wins + ties / 2) / (P * N) over all positive/negative pairs.
double pairwise_auroc_oracle(std::span<const double> scores, std::span<const std::uint8_t> labels);

}  // namespace cap
