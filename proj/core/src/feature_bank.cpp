#include "cap/feature_bank.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "cap/binary_io.h"
#include "cap/errors.h"

namespace cap {

MemoryBank::MemoryBank(FloatMatrix items, std::vector<std::string> ids, Provenance provenance)
    : items_(std::move(items)), ids_(std::move(ids)), provenance_(std::move(provenance)) {
  const auto n = static_cast<std::size_t>(items_.rows());
  if (n == 0 || items_.cols() == 0) throw DataError("memory bank must have N >= 1 and D >= 1");
  if (ids_.empty()) {
    ids_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids_.push_back(std::to_string(i));
  }
  if (ids_.size() != n) {
    throw DataError("memory bank has " + std::to_string(n) + " rows but " +
                    std::to_string(ids_.size()) + " ids");
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen.insert(ids_[i]).second) throw DataError("duplicate id \"" + ids_[i] + "\" at row " + std::to_string(i));
  }

  items_f64_ = items_.cast<double>();
  norms_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (Eigen::Index j = 0; j < items_f64_.cols(); ++j) {
      const double v = items_f64_(static_cast<Eigen::Index>(i), j);
      if (!std::isfinite(v)) throw DataError("non-finite entry in row " + std::to_string(i));
      sq += v * v;
    }
    norms_[i] = std::sqrt(sq);
    if (norms_[i] <= kNormFloor) throw DataError("near-zero feature vector at row " + std::to_string(i));
  }
}

MemoryBank build_bank(std::span<const Vector> features, std::vector<std::string> ids,
                      Provenance provenance) {
  if (features.empty()) throw DataError("cannot build a bank from zero features");
  const Eigen::Index d = features.front().size();
  FloatMatrix items(static_cast<Eigen::Index>(features.size()), d);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d) {
      throw DataError("dimension mismatch at row " + std::to_string(i) + ": expected " +
                      std::to_string(d) + ", got " + std::to_string(features[i].size()));
    }
    items.row(static_cast<Eigen::Index>(i)) = features[i].transpose().cast<float>();
  }
  return MemoryBank(std::move(items), std::move(ids), std::move(provenance));
}

namespace {

double checked_norm(const MemoryBank& bank, const Vector& query) {
  if (static_cast<std::size_t>(query.size()) != bank.dim()) {
    throw DataError("query dimension " + std::to_string(query.size()) + " does not match bank dimension " +
                    std::to_string(bank.dim()));
  }
  const double n = query.norm();
  if (!(n > kNormFloor)) throw DataError("zero-norm query");
  return n;
}

}  // namespace

Vector cosine_similarities(const MemoryBank& bank, const Vector& query) {
  const double qn = checked_norm(bank, query);
  const Matrix& items = bank.items_f64();
  const auto& norms = bank.norms();
  Vector sims(items.rows());
  for (Eigen::Index j = 0; j < items.rows(); ++j) {
    double dot = 0.0;
    for (Eigen::Index c = 0; c < items.cols(); ++c) dot += items(j, c) * query[c];
    sims[j] = std::clamp(dot / (norms[static_cast<std::size_t>(j)] * qn), -1.0, 1.0);
  }
  return sims;
}

NeighborSet top_k_neighbors(const MemoryBank& bank, const Vector& query, std::size_t k,
                            std::optional<std::size_t> exclude_index) {
  const std::size_t n = bank.size();
  if (exclude_index && *exclude_index >= n) {
    throw ConfigError("exclude_index " + std::to_string(*exclude_index) + " out of range for bank of size " +
                      std::to_string(n));
  }
  const std::size_t available = exclude_index ? n - 1 : n;
  if (k == 0 || k > available) {
    throw ConfigError("k=" + std::to_string(k) + " invalid for " + std::to_string(available) +
                      " candidate bank rows");
  }
  const Vector sims = cosine_similarities(bank, query);

  std::vector<std::size_t> order;
  order.reserve(available);
  for (std::size_t i = 0; i < n; ++i) {
    if (!exclude_index || i != *exclude_index) order.push_back(i);
  }
  const auto more_similar = [&](std::size_t a, std::size_t b) {
    const double sa = sims[static_cast<Eigen::Index>(a)];
    const double sb = sims[static_cast<Eigen::Index>(b)];
    return sa > sb || (sa == sb && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), more_similar);

  NeighborSet out;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  out.similarities.reserve(k);
  out.matrix.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(bank.dim()));
  for (std::size_t r = 0; r < k; ++r) {
    const auto idx = static_cast<Eigen::Index>(out.indices[r]);
    out.similarities.push_back(sims[idx]);
    out.matrix.row(static_cast<Eigen::Index>(r)) = bank.items_f64().row(idx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string encode_metadata(const MemoryBank& bank, const std::optional<std::vector<std::uint8_t>>& labels) {
  nlohmann::json meta;
  meta["ids"] = bank.ids();
  meta["provenance"] = bank.provenance();
  if (labels) {
    std::string text(labels->size(), '0');
    for (std::size_t i = 0; i < labels->size(); ++i) text[i] = (*labels)[i] ? '1' : '0';
    meta["labels"] = text;
  }
  return meta.dump();
}

std::string encode(const MemoryBank& bank, const std::optional<std::vector<std::uint8_t>>& labels) {
  if (labels && labels->size() != bank.size()) {
    throw DataError("label count " + std::to_string(labels->size()) + " does not match row count " +
                    std::to_string(bank.size()));
  }
  io::ByteWriter w;
  w.put_magic(kBankMagic);
  w.put_u32(kBankVersion);
  w.put_u8(kDtypeF32);
  w.put_u64(bank.size());
  w.put_u64(bank.dim());
  const FloatMatrix& items = bank.items();
  w.put_f32s(std::span<const float>(items.data(), static_cast<std::size_t>(items.size())));
  w.put_text_block(encode_metadata(bank, labels));
  return w.release();
}

FeatureSet decode(std::string_view bytes) {
  io::ByteReader r(bytes, "bank file");
  r.expect_magic(kBankMagic);
  const std::uint32_t version = r.u32();
  if (version != kBankVersion) throw DataError("bank file: unsupported version " + std::to_string(version));
  const std::uint8_t dtype = r.u8();
  if (dtype != kDtypeF32) throw DataError("bank file: unknown dtype flag " + std::to_string(dtype));
  const std::uint64_t n = r.u64();
  const std::uint64_t d = r.u64();
  if (n == 0 || d == 0) throw DataError("bank file: empty shape " + std::to_string(n) + "x" + std::to_string(d));
  if (d > (std::uint64_t{1} << 40) / n) throw DataError("bank file: implausible shape");
  r.require(4 * n * d, "payload");

  FloatMatrix items(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  r.f32s(std::span<float>(items.data(), static_cast<std::size_t>(items.size())));
  const std::string text = r.text_block();

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bank file: malformed metadata: ") + e.what());
  }
  std::vector<std::string> ids;
  Provenance provenance;
  std::optional<std::vector<std::uint8_t>> labels;
  try {
    if (meta.contains("ids")) ids = meta.at("ids").get<std::vector<std::string>>();
    if (meta.contains("provenance")) provenance = meta.at("provenance").get<Provenance>();
    if (meta.contains("labels")) {
      const auto s = meta.at("labels").get<std::string>();
      if (s.size() != n) throw DataError("bank file: label string length does not match N");
      std::vector<std::uint8_t> l(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '0' && s[i] != '1') throw DataError("bank file: label byte must be '0' or '1'");
        l[i] = s[i] == '1' ? 1 : 0;
      }
      labels = std::move(l);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bank file: malformed metadata: ") + e.what());
  }
  return FeatureSet{MemoryBank(std::move(items), std::move(ids), std::move(provenance)), std::move(labels)};
}

}  // namespace

std::string serialize_bank(const MemoryBank& bank) { return encode(bank, std::nullopt); }

std::string serialize_feature_set(const FeatureSet& set) { return encode(set.features, set.labels); }

MemoryBank deserialize_bank(std::string_view bytes) { return decode(bytes).features; }

FeatureSet deserialize_feature_set(std::string_view bytes) { return decode(bytes); }

void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
  io::write_file(path, serialize_bank(bank));
}

MemoryBank load_bank(const std::filesystem::path& path) { return deserialize_bank(io::read_file(path)); }

void save_feature_set(const FeatureSet& set, const std::filesystem::path& path) {
  io::write_file(path, serialize_feature_set(set));
}

FeatureSet load_feature_set(const std::filesystem::path& path) {
  return deserialize_feature_set(io::read_file(path));
}

}  // namespace cap
