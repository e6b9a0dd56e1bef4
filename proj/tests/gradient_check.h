#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <cap/model.h>
#include <cap/objective.h>

#include "test_support.h"

namespace cap::testing {

struct GradientCase {
  ModelParams model;
  std::vector<TrainingSample> batch;
  ObjectiveOptions options;
};

// A small random instance: perturbed identity head, random attention, batch of
// positive-orthant queries with random neighbour matrices.
inline GradientCase random_gradient_case(std::mt19937_64& rng, std::size_t d, std::size_t k, HeadVariant variant,
                                         bool attention, std::size_t batch_size, double lambda) {
  GradientCase c;
  c.model = init_model(d, variant, attention, rng());
  for (Matrix* p : c.model.parameters()) *p += random_matrix(rng, p->rows(), p->cols(), 0.2);
  const auto de = static_cast<Eigen::Index>(d);
  for (std::size_t b = 0; b < batch_size; ++b) {
    TrainingSample s;
    s.z = random_vector(rng, de).cwiseAbs() + Vector::Constant(de, 0.5);
    s.neighbors = (random_matrix(rng, static_cast<Eigen::Index>(k), de).cwiseAbs().array() + 0.5).matrix();
    c.batch.push_back(std::move(s));
  }
  c.options.lambda = lambda;
  return c;
}

// Entry-wise relative error |a - n| / max(|a|, |n|, floor). The floor keeps
// entries whose true derivative is ~0 from being judged on round-off alone.
inline constexpr double kRelativeErrorFloor = 1e-3;

inline double max_relative_error(const GradientSet& analytic, const GradientSet& numeric,
                                 double floor = kRelativeErrorFloor) {
  double worst = 0.0;
  for (std::size_t p = 0; p < analytic.matrices.size(); ++p) {
    const Matrix& a = analytic.matrices[p];
    const Matrix& n = numeric.matrices[p];
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double x = a.data()[i];
      const double y = n.data()[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    }
  }
  return worst;
}

inline double max_abs_difference(const GradientSet& a, const GradientSet& b) {
  double worst = 0.0;
  for (std::size_t p = 0; p < a.matrices.size(); ++p) {
    worst = std::max(worst, (a.matrices[p] - b.matrices[p]).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace cap::testing
