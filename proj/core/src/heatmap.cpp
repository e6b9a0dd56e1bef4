#include "cap/heatmap.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "cap/binary_io.h"
#include "cap/errors.h"

namespace cap {

Vector SpatialFeatureMap::pooled() const { return cells.colwise().mean().transpose(); }

Matrix similarity_map(const Vector& vector, const SpatialFeatureMap& map, std::vector<std::size_t>* zero_cells) {
  if (static_cast<std::size_t>(vector.size()) != map.dim()) throw DataError("similarity_map: dimension mismatch");
  if (map.cells.rows() != static_cast<Eigen::Index>(map.height * map.width)) {
    throw DataError("similarity_map: cell count does not match H x W");
  }
  const double vn = vector.norm();
  if (!(vn > kNormFloor)) throw DataError("similarity_map: zero-norm vector");
  Matrix grid(static_cast<Eigen::Index>(map.height), static_cast<Eigen::Index>(map.width));
  for (std::size_t h = 0; h < map.height; ++h) {
    for (std::size_t w = 0; w < map.width; ++w) {
      const std::size_t flat = h * map.width + w;
      const auto cell = map.cells.row(static_cast<Eigen::Index>(flat));
      const double cn = cell.norm();
      double value = 0.0;
      if (cn > kNormFloor) {
        value = std::clamp(cell.dot(vector) / (cn * vn), -1.0, 1.0);
      } else if (zero_cells) {
        zero_cells->push_back(flat);
      }
      grid(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w)) = value;
    }
  }
  return grid;
}

Matrix bilinear_upsample(const Matrix& grid, std::size_t target_h, std::size_t target_w) {
  const auto h = static_cast<std::size_t>(grid.rows());
  const auto w = static_cast<std::size_t>(grid.cols());
  if (h == 0 || w == 0) throw DataError("bilinear_upsample: empty grid");
  if (target_h < h || target_w < w) {
    throw ConfigError("bilinear_upsample: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                      " is smaller than source " + std::to_string(h) + "x" + std::to_string(w));
  }
  const auto coord = [](std::size_t i, std::size_t src, std::size_t dst) {
    if (dst == 1 || src == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1);
  };
  Matrix out(static_cast<Eigen::Index>(target_h), static_cast<Eigen::Index>(target_w));
  for (std::size_t i = 0; i < target_h; ++i) {
    const double y = coord(i, h, target_h);
    const auto y0 = std::min(static_cast<std::size_t>(std::floor(y)), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < target_w; ++j) {
      const double x = coord(j, w, target_w);
      const auto x0 = std::min(static_cast<std::size_t>(std::floor(x)), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = x - static_cast<double>(x0);
      const auto at = [&](std::size_t r, std::size_t c) {
        return grid(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      };
      const double top = (1.0 - fx) * at(y0, x0) + fx * at(y0, x1);
      const double bottom = (1.0 - fx) * at(y1, x0) + fx * at(y1, x1);
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (1.0 - fy) * top + fy * bottom;
    }
  }
  return out;
}

HeatmapResult anomaly_heatmap(const Vector& z, const Vector& z_normal, const SpatialFeatureMap& map,
                              std::size_t target_h, std::size_t target_w) {
  HeatmapResult r;
  r.raw_grid = (similarity_map(z, map) - similarity_map(z_normal, map)).cwiseAbs();
  r.upsampled = bilinear_upsample(r.raw_grid, target_h, target_w);
  r.min = r.upsampled.minCoeff();
  r.max = r.upsampled.maxCoeff();
  return r;
}

std::string to_pgm(const Matrix& grid, double min, double max) {
  std::string out = "P5\n" + std::to_string(grid.cols()) + " " + std::to_string(grid.rows()) + "\n255\n";
  const double range = max - min;
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      double v = range > 0.0 ? (grid(r, c) - min) / range : 0.0;
      v = std::clamp(v, 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  return out;
}

std::string to_csv_grid(const Matrix& grid) {
  std::ostringstream os;
  char buf[64];
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      if (c) os << ',';
      auto res = std::to_chars(buf, buf + sizeof(buf), grid(r, c));
      os << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    os << '\n';
  }
  return os.str();
}

std::string serialize_spatial_maps(const SpatialMapFile& file) {
  if (file.maps.empty()) throw DataError("spatial-map file needs at least one map");
  const auto& first = file.maps.front();
  io::ByteWriter w;
  w.put_magic(kSpatialMagic);
  w.put_u32(kSpatialVersion);
  w.put_u64(file.maps.size());
  w.put_u64(first.height);
  w.put_u64(first.width);
  w.put_u64(first.dim());
  nlohmann::json meta;
  std::vector<std::string> ids;
  for (const auto& m : file.maps) {
    if (m.height != first.height || m.width != first.width || m.dim() != first.dim() ||
        m.cells.rows() != static_cast<Eigen::Index>(m.height * m.width)) {
      throw DataError("spatial maps in one file must share H, W and D");
    }
    for (Eigen::Index i = 0; i < m.cells.size(); ++i) w.put_f32(static_cast<float>(m.cells.data()[i]));
    ids.push_back(m.source_id);
  }
  meta["ids"] = ids;
  meta["provenance"] = file.provenance;
  w.put_text_block(meta.dump());
  return w.release();
}

SpatialMapFile deserialize_spatial_maps(std::string_view bytes) {
  io::ByteReader r(bytes, "spatial-map file");
  r.expect_magic(kSpatialMagic);
  const std::uint32_t version = r.u32();
  if (version != kSpatialVersion) throw DataError("spatial-map file: unsupported version " + std::to_string(version));
  const std::uint64_t count = r.u64();
  const std::uint64_t h = r.u64();
  const std::uint64_t w = r.u64();
  const std::uint64_t d = r.u64();
  if (count == 0 || h == 0 || w == 0 || d == 0) throw DataError("spatial-map file: empty shape");
  const std::uint64_t limit = std::uint64_t{1} << 40;
  if (h > limit / w || h * w > limit / d || h * w * d > limit / count) throw DataError("spatial-map file: implausible shape");
  r.require(4 * count * h * w * d, "payload");

  SpatialMapFile file;
  for (std::uint64_t i = 0; i < count; ++i) {
    SpatialFeatureMap m;
    m.height = static_cast<std::size_t>(h);
    m.width = static_cast<std::size_t>(w);
    m.cells.resize(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < m.cells.size(); ++j) {
      const float v = r.f32();
      if (!std::isfinite(v)) throw DataError("spatial-map file: non-finite entry in map " + std::to_string(i));
      m.cells.data()[j] = static_cast<double>(v);
    }
    m.source_id = std::to_string(i);
    file.maps.push_back(std::move(m));
  }
  const std::string text = r.text_block();
  try {
    const auto meta = nlohmann::json::parse(text);
    if (meta.contains("ids")) {
      const auto ids = meta.at("ids").get<std::vector<std::string>>();
      if (ids.size() != count) throw DataError("spatial-map file: id count does not match map count");
      for (std::size_t i = 0; i < ids.size(); ++i) file.maps[i].source_id = ids[i];
    }
    if (meta.contains("provenance")) file.provenance = meta.at("provenance").get<Provenance>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("spatial-map file: malformed metadata: ") + e.what());
  }
  return file;
}

void save_spatial_maps(const SpatialMapFile& file, const std::filesystem::path& path) {
  io::write_file(path, serialize_spatial_maps(file));
}

SpatialMapFile load_spatial_maps(const std::filesystem::path& path) {
  return deserialize_spatial_maps(io::read_file(path));
}

}  // namespace cap
