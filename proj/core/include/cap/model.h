#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cap/feature_bank.h"
#include "cap/types.h"

namespace cap {

enum class HeadVariant : std::uint8_t {
  Linear = 0,            // x W^T
  LinearRelu = 1,        // max(0, x W^T)
  LinearReluLinear = 2,  // max(0, x W1^T) W2^T
};

std::string_view head_variant_name(HeadVariant v);  // "l", "l-relu", "l-relu-l"
HeadVariant parse_head_variant(std::string_view name);
std::size_t head_matrix_count(HeadVariant v);

struct HeadParams {
  HeadVariant variant = HeadVariant::Linear;
  std::vector<Matrix> matrices;  // D x D each, count fixed by variant
};

struct AttentionParams {
  Matrix w_q;
  Matrix w_k;
};

struct ModelParams {
  HeadParams head;
  std::optional<AttentionParams> attention;
  std::size_t dim = 0;

  // Head matrices first, then W_Q and W_K when attention is present.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

// Throws DataError when matrix shapes or counts disagree with dim/variant.
void validate(const ModelParams& model);

// Head matrices start at identity; W_Q and W_K ~ N(0, 1/D) from `seed`.
ModelParams init_model(std::size_t dim, HeadVariant variant, bool attention_enabled, std::uint64_t seed);

// Applies the shared head to every row of `input` (R x D).
Matrix project(const HeadParams& head, const Matrix& input);
Vector project(const HeadParams& head, const Vector& input);

struct AttentionResult {
  Matrix attention;  // K x K, row-stochastic
  Matrix attended;   // A * m_hat
};

// softmax((m_hat W_Q)(m_hat W_K)^T / sqrt(D)) applied to m_hat itself, with no
// value transform and no normalisation layer.
AttentionResult reformed_attention(const AttentionParams& attn, const Matrix& m_hat);

struct NormalRepresentation {
  Vector z_normal;
  Vector mix_weights;  // sum to 2; z_normal = mix_weights^T m_hat
  Matrix attention;    // uniform when attention is disabled
};

// Mean over rows of (m_hat + A m_hat). Without attention A is uniform, which
// makes z_normal twice the row mean.
NormalRepresentation normal_representation(const Matrix& m_hat, const AttentionParams* attn);

struct ForwardOutput {
  Vector z;
  Vector z_hat;
  Matrix m_hat;
  Matrix attention_matrix;
  Vector z_normal;
  Vector mix_weights;

  // Halved weights, summing to one, for display.
  Vector display_weights() const { return mix_weights / 2.0; }
};

ForwardOutput forward(const ModelParams& model, const Vector& z, const NeighborSet& neighbors);
ForwardOutput forward(const ModelParams& model, const Vector& z, const Matrix& neighbor_rows);

// Model file: "CAPMODL1" | u32 version | u8 variant | u8 attention | u64 D |
// head matrices, then W_Q, W_K (row-major f32) | u32 len | metadata text.
inline constexpr std::string_view kModelMagic = "CAPMODL1";
inline constexpr std::uint32_t kModelVersion = 1;

// Parameters are narrowed to float on write.
std::string serialize_model(const ModelParams& model, std::string_view metadata = {});
ModelParams deserialize_model(std::string_view bytes, std::string* metadata = nullptr);
void save_model(const ModelParams& model, const std::filesystem::path& path, std::string_view metadata = {});
ModelParams load_model(const std::filesystem::path& path, std::string* metadata = nullptr);

// Rounds every parameter through float, the precision models are stored at.
void round_to_storage_precision(ModelParams& model);

}  // namespace cap
