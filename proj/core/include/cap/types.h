#pragma once

#include <Eigen/Core>

namespace cap {

// Compute-side storage is double precision throughout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Persisted payloads are 32-bit floats.
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Norms below this are treated as zero everywhere in the engine.
inline constexpr double kNormFloor = 1e-12;

}  // namespace cap
