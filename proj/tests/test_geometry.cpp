#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "shsnet/geometry.hpp"
#include "test_util.hpp"

using namespace shsnet;
using shsnet::testing::TempDir;

namespace {

std::vector<std::size_t> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k) {
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double da = (pts[a] - q).squaredNorm();
    const double db = (pts[b] - q).squaredNorm();
    return da < db || (da == db && a < b);
  });
  idx.resize(std::min(k, pts.size()));
  return idx;
}

std::vector<Vec3> random_points(std::size_t n, std::mt19937_64& rng, bool quantized = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) {
    p = Vec3(u(rng), u(rng), u(rng));
    // Coarse grid to force distance ties.
    if (quantized) p = (p * 3.0).array().round().matrix() / 3.0;
  }
  return pts;
}

}  // namespace

TEST(LoadXyz, SinglePointWithoutNormals) {
  TempDir dir;
  auto cloud = load_xyz(dir.write("a.xyz", "0 0 0\n"));
  EXPECT_EQ(cloud.size(), 1u);
  EXPECT_FALSE(cloud.has_normals());
}

TEST(LoadXyz, RenormalizesNormals) {
  TempDir dir;
  auto cloud = load_xyz(dir.write("a.xyz", "# header\n\n1 0 0 0 0 2\n"));
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(cloud.point(0), Vec3(1, 0, 0));
  EXPECT_EQ(cloud.normals()[0], Vec3(0, 0, 1));
}

TEST(LoadXyz, RejectsNonNumericToken) {
  TempDir dir;
  try {
    load_xyz(dir.write("a.xyz", "a b c\n"));
    FAIL() << "expected MalformedLine";
  } catch (const MalformedLine& e) {
    EXPECT_EQ(e.line_no(), 1u);
  }
}

TEST(LoadXyz, RejectsWrongColumnCount) {
  TempDir dir;
  try {
    load_xyz(dir.write("a.xyz", "0 0 0\n# c\n1 2 3 4\n"));
    FAIL() << "expected MalformedLine";
  } catch (const MalformedLine& e) {
    EXPECT_EQ(e.line_no(), 3u);
  }
  EXPECT_THROW(load_xyz(dir.write("b.xyz", "0 0 0\n1 2 3 0 0 1\n")), MalformedLine);
}

TEST(LoadXyz, EmptyFileIsEmptyCloud) {
  TempDir dir;
  EXPECT_THROW(load_xyz(dir.write("a.xyz", "# nothing\n\n")), EmptyCloud);
  EXPECT_THROW(load_xyz(dir / "missing.xyz"), IoError);
}

TEST(LoadXyz, RoundTripIsExact) {
  TempDir dir;
  auto cloud = add_noise(generate_shape(ShapeKind::torus, 500, 4), 0.01, 5);
  save_xyz(dir / "t.xyz", cloud);
  auto back = load_xyz(dir / "t.xyz");
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_EQ(back.point(i), cloud.point(i));
    EXPECT_NEAR((back.normals()[i] - cloud.normals()[i]).norm(), 0.0, 1e-15);
  }
}

TEST(PointCloud, EnforcesInvariants) {
  EXPECT_THROW(PointCloud({Vec3(0, 0, 0)}, std::vector<Vec3>{}), InvalidArgument);
  EXPECT_THROW(PointCloud({Vec3(0, 0, 0)}, std::vector<Vec3>{Vec3(0, 0, 2)}), InvalidArgument);
  PointCloud c({Vec3(0, 0, 0), Vec3(1, 2, 2)});
  EXPECT_NEAR(c.bbox_diagonal(), 3.0, 1e-12);
}

TEST(Knn, CollinearPoints) {
  KdIndex index(std::vector<Vec3>{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)});
  auto nn = index.knn(Vec3(0, 0, 0), 2);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn[0].index, 0u);
  EXPECT_EQ(nn[1].index, 1u);
  EXPECT_DOUBLE_EQ(nn[1].distance, 1.0);
  EXPECT_EQ(index.knn(Vec3(0, 0, 0), 10).size(), 3u);
  EXPECT_THROW(index.knn(Vec3(0, 0, 0), 0), InvalidArgument);
}

TEST(Knn, QueryAtPointReturnsItself) {
  std::mt19937_64 rng(3);
  auto pts = random_points(300, rng);
  KdIndex index(pts, 4);
  for (std::size_t i = 0; i < pts.size(); i += 17) {
    auto nn = index.knn(pts[i], 1);
    ASSERT_EQ(nn.size(), 1u);
    EXPECT_EQ(nn[0].index, i);
    EXPECT_EQ(nn[0].distance, 0.0);
  }
}

TEST(Knn, MatchesExhaustiveScan) {
  std::mt19937_64 rng(11);
  auto pts = random_points(200, rng);
  KdIndex index(pts);
  for (int t = 0; t < 20; ++t) {
    const Vec3 q = random_points(1, rng).front();
    auto nn = index.knn(q, 16);
    auto expect = brute_knn(pts, q, 16);
    ASSERT_EQ(nn.size(), expect.size());
    for (std::size_t i = 0; i < nn.size(); ++i) EXPECT_EQ(nn[i].index, expect[i]);
  }
}

// Property: equality with the exhaustive scan, including ordering and ties.
TEST(Knn, PropertyRandomCloudsWithTies) {
  std::mt19937_64 rng(12345);
  std::uniform_int_distribution<std::size_t> size_dist(1, 500);
  std::uniform_int_distribution<std::size_t> k_dist(1, 40);
  std::uniform_int_distribution<std::size_t> leaf_dist(1, 20);
  for (int trial = 0; trial < 60; ++trial) {
    const bool quantized = trial % 2 == 1;
    auto pts = random_points(size_dist(rng), rng, quantized);
    KdIndex index(pts, leaf_dist(rng));
    for (int t = 0; t < 5; ++t) {
      const Vec3 q = t % 2 ? pts[rng() % pts.size()] : random_points(1, rng, quantized).front();
      const std::size_t k = k_dist(rng);
      auto nn = index.knn(q, k);
      auto expect = brute_knn(pts, q, k);
      ASSERT_EQ(nn.size(), expect.size());
      for (std::size_t i = 0; i < nn.size(); ++i) ASSERT_EQ(nn[i].index, expect[i]) << "trial " << trial;
    }
  }
}

TEST(ExtractPatch, CoplanarPointsScaledToUnitRadius) {
  PointCloud cloud({Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)});
  KdIndex index(cloud);
  auto patch = extract_patch(cloud, index, 0, 4);
  ASSERT_EQ(patch.size(), 4u);
  EXPECT_EQ(patch.neighbor_indices.front(), 0u);
  EXPECT_EQ(patch.local_coords.front(), Vec3::Zero());
  double max_norm = 0.0;
  for (const auto& p : patch.local_coords) {
    EXPECT_EQ(p.z(), 0.0);
    max_norm = std::max(max_norm, p.norm());
  }
  EXPECT_NEAR(max_norm, 1.0, 1e-6);
  EXPECT_DOUBLE_EQ(patch.patch_radius, 2.0);
}

TEST(ExtractPatch, DuplicatedPointsAreDegenerate) {
  PointCloud cloud(std::vector<Vec3>(5, Vec3(1, 2, 3)));
  KdIndex index(cloud);
  EXPECT_THROW(extract_patch(cloud, index, 2, 5), DegeneratePatch);
}

TEST(ExtractPatch, InverseTransformReproducesCoordinates) {
  auto cloud = generate_shape(ShapeKind::sphere, 2000, 9);
  KdIndex index(cloud);
  for (std::size_t q = 0; q < cloud.size(); q += 97) {
    auto patch = extract_patch(cloud, index, q, 32);
    EXPECT_EQ(patch.neighbor_indices.front(), q);
    for (std::size_t r = 0; r < patch.size(); ++r)
      EXPECT_LT((patch.to_world(r) - cloud.point(patch.neighbor_indices[r])).norm(), 1e-9);
  }
}

TEST(GenerateShape, SphereNormalEqualsPosition) {
  auto cloud = generate_shape(ShapeKind::sphere, 1000, 1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_NEAR(cloud.point(i).norm(), 1.0, 1e-12);
    EXPECT_LT((cloud.normals()[i] - cloud.point(i)).norm(), 1e-12);
  }
}

TEST(GenerateShape, PlaneHasConstantNormal) {
  auto cloud = generate_shape(ShapeKind::plane, 200, 1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_EQ(cloud.point(i).z(), 0.0);
    EXPECT_EQ(cloud.normals()[i], Vec3(0, 0, 1));
  }
}

// Independent oracle: normalized central-difference gradient of the implicit
// torus F(p) = (sqrt(x^2 + y^2) - R)^2 + z^2 - r^2.
TEST(GenerateShape, TorusNormalsMatchImplicitGradient) {
  auto cloud = generate_shape(ShapeKind::torus, 10000, 2);
  auto implicit = [](const Vec3& p) {
    const double ring = std::hypot(p.x(), p.y()) - kTorusMajor;
    return ring * ring + p.z() * p.z() - kTorusMinor * kTorusMinor;
  };
  const double h = 1e-6;
  double worst_deg = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.point(i);
    EXPECT_NEAR(implicit(p), 0.0, 1e-12);
    Vec3 grad;
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = h;
      grad[c] = (implicit(p + e) - implicit(p - e)) / (2 * h);
    }
    const double cosang = std::clamp(grad.normalized().dot(cloud.normals()[i]), -1.0, 1.0);
    worst_deg = std::max(worst_deg, std::acos(cosang) * 180.0 / std::numbers::pi);
  }
  EXPECT_LT(worst_deg, 0.1);
}

TEST(GenerateShape, ConvexShapesAreOutwardAndUnit) {
  for (auto kind : {ShapeKind::sphere, ShapeKind::box}) {
    auto cloud = generate_shape(kind, 3000, 8);
    const Vec3 c = cloud.centroid();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      EXPECT_NEAR(cloud.normals()[i].norm(), 1.0, 1e-12);
      EXPECT_GT(cloud.normals()[i].dot(cloud.point(i) - c), 0.0);
    }
  }
}

TEST(GenerateShape, DeterministicAndValidated) {
  auto a = generate_shape(ShapeKind::torus, 100, 77);
  auto b = generate_shape(ShapeKind::torus, 100, 77);
  auto c = generate_shape(ShapeKind::torus, 100, 78);
  EXPECT_EQ(a.points(), b.points());
  EXPECT_NE(a.points(), c.points());
  EXPECT_THROW(generate_shape(ShapeKind::sphere, 9, 1), InvalidArgument);
}

TEST(AddNoise, ZeroLevelIsIdentity) {
  auto cloud = generate_shape(ShapeKind::box, 100, 1);
  auto same = add_noise(cloud, 0.0, 3);
  EXPECT_EQ(same.points(), cloud.points());
  EXPECT_THROW(add_noise(cloud, -0.1, 3), InvalidArgument);
}

// Sample statistics: per-axis displacement std equals level * diagonal.
TEST(AddNoise, DisplacementStatistics) {
  std::vector<Vec3> pts(100000, Vec3::Zero());
  pts[0] = Vec3(1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0));  // unit bbox diagonal
  PointCloud cloud(pts);
  ASSERT_NEAR(cloud.bbox_diagonal(), 1.0, 1e-12);
  auto noisy = add_noise(cloud, 0.0012, 21);
  Vec3 sum2 = Vec3::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) sum2 += (noisy.point(i) - pts[i]).cwiseAbs2();
  const Vec3 sd = (sum2 / static_cast<double>(pts.size())).cwiseSqrt();
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(sd[c], 0.0012, 0.05 * 0.0012);
  EXPECT_NEAR(std::sqrt(sum2.sum() / static_cast<double>(pts.size())), 0.0012 * std::sqrt(3.0), 0.05 * 0.0012 * std::sqrt(3.0));
}

TEST(Density, GradientThinsMonotonically) {
  auto cloud = generate_shape(ShapeKind::plane, 50000, 3);
  auto thinned = apply_density(cloud, DensityVariant::gradient, 4);
  std::array<int, 10> bins{};
  for (const auto& p : thinned.points()) bins[std::min(9, static_cast<int>((p.x() + 1.0) / 0.2))]++;
  for (int b = 1; b < 10; ++b) EXPECT_LT(bins[b], bins[b - 1]);
  auto striped = apply_density(cloud, DensityVariant::stripe, 4);
  EXPECT_LT(striped.size(), cloud.size());
  EXPECT_GT(striped.size(), cloud.size() / 2);
}
