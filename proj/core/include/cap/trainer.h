#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cap/feature_bank.h"
#include "cap/model.h"
#include "cap/objective.h"

namespace cap {

struct TrainingConfig {
  std::size_t k = 32;
  double lambda = 2.0;
  double learning_rate = 5e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  HeadVariant head_variant = HeadVariant::Linear;
  bool attention_enabled = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool scale_euclidean_by_dim = false;
  std::size_t workers = 1;

  // K=32, lambda=2, batch 64, lr 5e-4.
  static TrainingConfig cifar();
  // K=4, lambda=0.1, batch 16, lr 1e-4.
  static TrainingConfig mvtec();

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double l_s = 0.0;
  double omega = 0.0;
  double total = 0.0;
  double head_frobenius = 0.0;
  double holdout_normal_mean = 0.0;   // NaN without a holdout set
  double holdout_anomaly_mean = 0.0;  // NaN without anomaly labels
};

struct TrainingTrace {
  std::vector<EpochRecord> epochs;

  // Header: epoch,l_s,omega,total,head_frobenius,holdout_normal_mean,holdout_anomaly_mean
  std::string to_csv() const;
};

struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const ModelParams& model);
};

// Bias-corrected Adam, no weight decay.
void adam_step(OptimizerState& state, ModelParams& model, const GradientSet& grads, const TrainingConfig& config);

// Training-time neighbour table: sample i never appears in its own set.
std::vector<NeighborSet> precompute_neighbors(const MemoryBank& bank, std::size_t k, std::size_t workers = 1);

// Frobenius norm over all head matrices.
double head_frobenius(const ModelParams& model);

struct TrainResult {
  ModelParams model;
  TrainingTrace trace;
};

// Deterministic in config.seed: attention init, shuffling and batch order all
// derive from it. The holdout set never influences the parameters.
TrainResult train(const MemoryBank& bank, const TrainingConfig& config, const FeatureSet* holdout = nullptr);

struct CollapseDiagnostics {
  double head_frobenius = 0.0;
  double head_sparsity = 0.0;  // fraction of head entries with |w| < 1e-4
  double adapted_norm_mean = 0.0;
  double adapted_norm_variance = 0.0;
  double holdout_normal_mean = 0.0;
  double holdout_anomaly_mean = 0.0;
};

CollapseDiagnostics collapse_diagnostics(const ModelParams& model, const MemoryBank& bank,
                                         const FeatureSet* holdout = nullptr, std::size_t k = 1,
                                         std::size_t workers = 1);

}  // namespace cap
