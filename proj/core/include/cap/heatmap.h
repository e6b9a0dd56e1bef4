#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cap/feature_bank.h"
#include "cap/types.h"

namespace cap {

// H x W grid of D-dimensional cells, stored as an (H*W) x D matrix with the
// W index varying fastest.
struct SpatialFeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  Matrix cells;
  std::string source_id;

  std::size_t dim() const { return static_cast<std::size_t>(cells.cols()); }
  // Mean over cells (global average pooling).
  Vector pooled() const;
};

// Cosine of `vector` against every cell. Cells under the norm floor score 0
// and their flat indices are appended to `zero_cells` when provided.
Matrix similarity_map(const Vector& vector, const SpatialFeatureMap& map, std::vector<std::size_t>* zero_cells = nullptr);

// Align-corners bilinear interpolation; target must be at least the source size.
Matrix bilinear_upsample(const Matrix& grid, std::size_t target_h, std::size_t target_w);

struct HeatmapResult {
  Matrix raw_grid;   // |sim(z) - sim(z_normal)| at grid resolution
  Matrix upsampled;  // target_h x target_w
  double min = 0.0;
  double max = 0.0;
};

// Differences at grid resolution, then upsamples.
HeatmapResult anomaly_heatmap(const Vector& z, const Vector& z_normal, const SpatialFeatureMap& map,
                              std::size_t target_h, std::size_t target_w);

// Binary P5 graymap, min..max stretched to 0..255.
std::string to_pgm(const Matrix& grid, double min, double max);
std::string to_csv_grid(const Matrix& grid);

// Spatial-map file: "CAPSMAP1" | u32 version | u64 count | u64 H | u64 W | u64 D |
// count*H*W*D f32 | u32 len | metadata (ids, provenance).
inline constexpr std::string_view kSpatialMagic = "CAPSMAP1";
inline constexpr std::uint32_t kSpatialVersion = 1;

struct SpatialMapFile {
  std::vector<SpatialFeatureMap> maps;
  Provenance provenance;
};

// Cells are narrowed to float on write.
std::string serialize_spatial_maps(const SpatialMapFile& file);
SpatialMapFile deserialize_spatial_maps(std::string_view bytes);
void save_spatial_maps(const SpatialMapFile& file, const std::filesystem::path& path);
SpatialMapFile load_spatial_maps(const std::filesystem::path& path);

}  // namespace cap
