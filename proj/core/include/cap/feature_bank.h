#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cap/types.h"

namespace cap {

// Free-form provenance recorded in file metadata (extractor name, source, ...).
using Provenance = std::map<std::string, std::string>;

// K nearest bank rows for one query, most similar first.
struct NeighborSet {
  std::vector<std::size_t> indices;
  std::vector<double> similarities;
  Matrix matrix;  // K x D, rows copied from the bank in `indices` order

  std::size_t k() const { return indices.size(); }
};

// Frozen N x D matrix of pretrained normal features.
//
// Rows are stored as 32-bit floats exactly as persisted; all similarity math
// runs on a double-precision copy with cached row norms. Instances are
// immutable after construction, so concurrent const queries are safe.
class MemoryBank {
 public:
  // Throws DataError on ragged rows, non-finite entries, duplicate ids or a
  // row whose norm is below kNormFloor (the message names the row index).
  MemoryBank(FloatMatrix items, std::vector<std::string> ids, Provenance provenance = {});

  std::size_t size() const { return static_cast<std::size_t>(items_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(items_.cols()); }

  const FloatMatrix& items() const { return items_; }
  const Matrix& items_f64() const { return items_f64_; }
  const std::vector<double>& norms() const { return norms_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const Provenance& provenance() const { return provenance_; }

  Vector row(std::size_t i) const { return items_f64_.row(static_cast<Eigen::Index>(i)).transpose(); }

 private:
  FloatMatrix items_;
  Matrix items_f64_;
  std::vector<double> norms_;
  std::vector<std::string> ids_;
  Provenance provenance_;
};

// Rows are rounded to float storage; ids default to "0".."N-1" when empty.
MemoryBank build_bank(std::span<const Vector> features, std::vector<std::string> ids = {},
                      Provenance provenance = {});

// Entry j is cos(m_j, query) clamped to [-1, 1].
Vector cosine_similarities(const MemoryBank& bank, const Vector& query);

// Exact top-k by cosine similarity, ties broken by ascending bank index.
// With `exclude_index` set the given row is skipped (training-time rule).
NeighborSet top_k_neighbors(const MemoryBank& bank, const Vector& query, std::size_t k,
                            std::optional<std::size_t> exclude_index = std::nullopt);

// A bank-format file with optional per-row labels (1 = anomaly).
struct FeatureSet {
  MemoryBank features;
  std::optional<std::vector<std::uint8_t>> labels;
};

// Bank file: "CAPBANK1" | u32 version | u8 dtype | u64 N | u64 D | N*D f32 | u32 len | metadata
inline constexpr std::string_view kBankMagic = "CAPBANK1";
inline constexpr std::uint32_t kBankVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

std::string serialize_bank(const MemoryBank& bank);
std::string serialize_feature_set(const FeatureSet& set);
MemoryBank deserialize_bank(std::string_view bytes);
FeatureSet deserialize_feature_set(std::string_view bytes);

void save_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank load_bank(const std::filesystem::path& path);
void save_feature_set(const FeatureSet& set, const std::filesystem::path& path);
FeatureSet load_feature_set(const std::filesystem::path& path);

}  // namespace cap
