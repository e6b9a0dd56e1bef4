#include <cmath>
#include <cstring>
#include <random>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <cap/binary_io.h>
#include <cap/errors.h>
#include <cap/heatmap.h>

#include "test_support.h"

namespace {

using cap::Matrix;
using cap::SpatialFeatureMap;
using cap::Vector;

SpatialFeatureMap random_map(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t d,
                             const std::string& id = "img") {
  SpatialFeatureMap m;
  m.height = h;
  m.width = w;
  m.cells = cap::testing::random_matrix(rng, static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(d));
  m.source_id = id;
  return m;
}

TEST(SimilarityMap, ConstantMapEqualToVector) {
  Vector v(3);
  v << 1, 2, 3;
  SpatialFeatureMap m{2, 3, v.transpose().replicate(6, 1), "x"};
  const Matrix g = cap::similarity_map(v, m);
  ASSERT_EQ(g.rows(), 2);
  ASSERT_EQ(g.cols(), 3);
  EXPECT_LT((g.array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(SimilarityMap, OrthogonalCellsAreZero) {
  SpatialFeatureMap m{1, 2, (Matrix(2, 2) << 0, 1, 0, 3).finished(), "x"};
  EXPECT_TRUE(cap::similarity_map(Vector::Unit(2, 0), m).isZero(0.0));
}

TEST(SimilarityMap, MatchesPerCellScalarLoop) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const SpatialFeatureMap m = random_map(rng, 2, 2, 4);
    const Vector v = cap::testing::random_vector(rng, 4);
    const Matrix g = cap::similarity_map(v, m);
    for (int h = 0; h < 2; ++h) {
      for (int w = 0; w < 2; ++w) {
        double dot = 0, a = 0, b = 0;
        for (int d = 0; d < 4; ++d) {
          const double c = m.cells(h * 2 + w, d);
          dot += c * v[d];
          a += c * c;
          b += v[d] * v[d];
        }
        EXPECT_NEAR(g(h, w), dot / std::sqrt(a * b), 1e-12);
      }
    }
  }
}

TEST(SimilarityMap, ZeroCellsAreFlagged) {
  SpatialFeatureMap m{1, 3, (Matrix(3, 2) << 1, 0, 0, 0, 0, 1).finished(), "x"};
  std::vector<std::size_t> zero;
  const Matrix g = cap::similarity_map(Vector::Ones(2), m, &zero);
  EXPECT_THAT(zero, ::testing::ElementsAre(1u));
  EXPECT_EQ(g(0, 1), 0.0);
}

TEST(SimilarityMap, Errors) {
  SpatialFeatureMap m{1, 1, Matrix::Ones(1, 2), "x"};
  EXPECT_THROW(cap::similarity_map(Vector::Zero(2), m), cap::DataError);
  EXPECT_THROW(cap::similarity_map(Vector::Ones(3), m), cap::DataError);
  m.height = 2;
  EXPECT_THROW(cap::similarity_map(Vector::Ones(2), m), cap::DataError);
}

TEST(Bilinear, TwoByTwoCheckerCentre) {
  const Matrix g = (Matrix(2, 2) << 0, 1, 1, 0).finished();
  const Matrix up = cap::bilinear_upsample(g, 3, 3);
  EXPECT_DOUBLE_EQ(up(1, 1), 0.5);
  EXPECT_EQ(up(0, 0), 0.0);
  EXPECT_EQ(up(0, 2), 1.0);
  EXPECT_EQ(up(2, 0), 1.0);
  EXPECT_EQ(up(2, 2), 0.0);
}

TEST(Bilinear, LinearRamp) {
  const Matrix up = cap::bilinear_upsample((Matrix(1, 2) << 0, 1).finished(), 1, 5);
  const double want[] = {0, 0.25, 0.5, 0.75, 1};
  for (int j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(up(0, j), want[j]);
}

TEST(Bilinear, ConstantAndIdentitySize) {
  EXPECT_TRUE(cap::bilinear_upsample(Matrix::Constant(3, 4, 2.5), 10, 9).isApprox(Matrix::Constant(10, 9, 2.5), 1e-15));
  std::mt19937_64 rng(2);
  const Matrix g = cap::testing::random_matrix(rng, 4, 6);
  EXPECT_EQ(cap::bilinear_upsample(g, 4, 6), g);
  EXPECT_THROW(cap::bilinear_upsample(g, 3, 6), cap::ConfigError);
}

TEST(Bilinear, AnchorsAndBoundsProperty) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto h = static_cast<std::size_t>(1 + t % 7);
    const auto w = static_cast<std::size_t>(1 + (t / 7) % 7);
    const Matrix g = cap::testing::random_matrix(rng, static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w));
    // (h-1) * s + 1 places the source points exactly on output pixels.
    const std::size_t s = 1 + static_cast<std::size_t>(t % 5);
    const std::size_t th = (h - 1) * s + 1, tw = (w - 1) * s + 1;
    const Matrix up = cap::bilinear_upsample(g, th, tw);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        EXPECT_NEAR(up(static_cast<Eigen::Index>(i * s), static_cast<Eigen::Index>(j * s)),
                    g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 1e-12);
      }
    }
    EXPECT_GE(up.minCoeff(), g.minCoeff() - 1e-12);
    EXPECT_LE(up.maxCoeff(), g.maxCoeff() + 1e-12);
  }
}

TEST(AnomalyHeatmap, IdenticalInputsGiveZero) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const SpatialFeatureMap m = random_map(rng, 1 + t % 7, 1 + t % 5, 6);
    const Vector z = cap::testing::random_vector(rng, 6);
    const auto r = cap::anomaly_heatmap(z, z, m, 16, 16);
    EXPECT_TRUE(r.raw_grid.isZero(0.0));
    EXPECT_TRUE(r.upsampled.isZero(0.0));
    const double c = std::exp(std::uniform_real_distribution<double>(-4, 4)(rng));
    EXPECT_LT(cap::anomaly_heatmap(z, c * z, m, 16, 16).raw_grid.maxCoeff(), 1e-12);
  }
}

TEST(AnomalyHeatmap, SymmetricScaleInvariantNonNegative) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const SpatialFeatureMap m = random_map(rng, 3, 4, 5);
    const Vector z = cap::testing::random_vector(rng, 5);
    const Vector zn = cap::testing::random_vector(rng, 5);
    const auto a = cap::anomaly_heatmap(z, zn, m, 7, 9);
    const auto b = cap::anomaly_heatmap(zn, z, m, 7, 9);
    const auto c = cap::anomaly_heatmap(3.0 * z, 0.2 * zn, m, 7, 9);
    EXPECT_GE(a.raw_grid.minCoeff(), 0.0);
    EXPECT_EQ(a.raw_grid, b.raw_grid);
    EXPECT_LT((a.raw_grid - c.raw_grid).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(a.min, a.upsampled.minCoeff());
    EXPECT_EQ(a.max, a.upsampled.maxCoeff());
    EXPECT_EQ(a.upsampled.rows(), 7);
    EXPECT_EQ(a.upsampled.cols(), 9);
  }
}

TEST(Output, PgmHeaderAndScaling) {
  const Matrix g = (Matrix(2, 3) << 0, 0.5, 1, 1, 0.5, 0).finished();
  const std::string pgm = cap::to_pgm(g, 0.0, 1.0);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 6);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size()]), 0);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 1]), 128);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 2]), 255);
  // A flat grid renders black rather than dividing by zero.
  EXPECT_EQ(cap::to_pgm(Matrix::Zero(1, 1), 0.0, 0.0).back(), '\0');
}

TEST(Output, CsvGrid) {
  EXPECT_EQ(cap::to_csv_grid((Matrix(2, 2) << 0, 0.25, 1, 0.5).finished()), "0,0.25\n1,0.5\n");
}

TEST(SpatialFile, RoundTripIsBitExact) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    cap::SpatialMapFile f;
    const std::size_t count = 1 + t % 3, h = 1 + t % 7, w = 1 + (t / 3) % 7, d = 1 + t % 5;
    for (std::size_t i = 0; i < count; ++i) {
      auto m = random_map(rng, h, w, d, "img-" + std::to_string(i));
      m.cells = m.cells.cast<float>().cast<double>();
      f.maps.push_back(std::move(m));
    }
    f.provenance = {{"extractor", "wrn50"}};
    const std::string bytes = cap::serialize_spatial_maps(f);
    const auto back = cap::deserialize_spatial_maps(bytes);
    ASSERT_EQ(back.maps.size(), count);
    for (std::size_t i = 0; i < count; ++i) {
      EXPECT_EQ(back.maps[i].cells, f.maps[i].cells);
      EXPECT_EQ(back.maps[i].source_id, f.maps[i].source_id);
      EXPECT_EQ(back.maps[i].height, h);
      EXPECT_EQ(back.maps[i].width, w);
    }
    EXPECT_EQ(back.provenance, f.provenance);
    EXPECT_EQ(cap::serialize_spatial_maps(back), bytes);
  }
}

TEST(SpatialFile, HeaderAndErrors) {
  std::mt19937_64 rng(7);
  cap::SpatialMapFile f{{random_map(rng, 7, 7, 3)}, {}};
  const std::string bytes = cap::serialize_spatial_maps(f);
  cap::io::ByteReader r(bytes, "smap");
  r.expect_magic("CAPSMAP1");
  EXPECT_EQ(r.u32(), 1u);
  EXPECT_EQ(r.u64(), 1u);
  EXPECT_EQ(r.u64(), 7u);
  EXPECT_EQ(r.u64(), 7u);
  EXPECT_EQ(r.u64(), 3u);

  EXPECT_THAT([] { cap::deserialize_spatial_maps(""); },
              ::testing::ThrowsMessage<cap::DataError>(::testing::HasSubstr("bad magic")));
  std::string cut = bytes;
  cut.resize(60);
  EXPECT_THAT([&] { cap::deserialize_spatial_maps(cut); },
              ::testing::ThrowsMessage<cap::DataError>(::testing::HasSubstr("truncated")));
  EXPECT_THROW(cap::serialize_spatial_maps({}), cap::DataError);
  cap::SpatialMapFile mixed{{random_map(rng, 2, 2, 3), random_map(rng, 3, 2, 3)}, {}};
  EXPECT_THROW(cap::serialize_spatial_maps(mixed), cap::DataError);
}

TEST(SpatialFeatureMap, PooledIsCellMean) {
  SpatialFeatureMap m{1, 2, (Matrix(2, 2) << 1, 2, 3, 6).finished(), "x"};
  EXPECT_EQ(m.pooled(), (Vector(2) << 2, 4).finished());
}

}  // namespace
