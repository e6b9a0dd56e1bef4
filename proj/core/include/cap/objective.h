#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cap/model.h"
#include "cap/types.h"

namespace cap {

struct LossBreakdown {
  double l_s = 0.0;     // mean 1 - cos(z_hat, z_normal)
  double omega = 0.0;   // mean 1 - cos(z, z_hat) + ||z - z_hat||^2
  double lambda = 0.0;
  double total = 0.0;   // l_s + lambda * omega
};

// One gradient per entry of ModelParams::parameters(), same order and shapes.
struct GradientSet {
  std::vector<Matrix> matrices;
};

// A pretrained query with its K pretrained neighbour rows.
struct TrainingSample {
  Vector z;
  Matrix neighbors;  // K x D
};

struct ObjectiveOptions {
  double lambda = 2.0;
  // Divide the squared-distance part of the constraint by D. Off by default.
  bool scale_euclidean_by_dim = false;
};

// a.b / (max(|a|, floor) * max(|b|, floor)); the denominator clamp lets
// training continue through a collapsing head instead of failing.
double guarded_cosine(const Vector& a, const Vector& b);

// Mean of 1 - cos(z_hat, z_normal). Samples whose norms hit the floor are
// appended to `degenerate` when provided.
double similarity_loss(std::span<const ForwardOutput> outputs, std::vector<std::size_t>* degenerate = nullptr);

double constraint_term(std::span<const Vector> z_batch, std::span<const Vector> z_hat_batch,
                       bool scale_euclidean_by_dim = false);

LossBreakdown total_loss(double l_s, double omega, double lambda);

// Loss of the whole batch evaluated through `forward`.
LossBreakdown evaluate_loss(const ModelParams& model, std::span<const TrainingSample> batch,
                            const ObjectiveOptions& options);

// Exact gradient of the total loss with respect to every parameter matrix.
// Per-sample work may fan out over `workers`; the reduction is in batch order.
std::pair<LossBreakdown, GradientSet> gradients(const ModelParams& model, std::span<const TrainingSample> batch,
                                                const ObjectiveOptions& options, std::size_t workers = 1);
std::pair<LossBreakdown, GradientSet> gradients(const ModelParams& model,
                                                std::span<const TrainingSample* const> batch,
                                                const ObjectiveOptions& options, std::size_t workers = 1);

// Central differences of evaluate_loss, one entry at a time.
GradientSet finite_difference_oracle(const ModelParams& model, std::span<const TrainingSample> batch,
                                     const ObjectiveOptions& options, double step = 1e-5);

}  // namespace cap
