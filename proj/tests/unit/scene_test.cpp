#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "egqn/common/binary_io.hpp"
#include "egqn/geometry/epipolar.hpp"
#include "egqn/scene/dataset.hpp"
#include "egqn/scene/scene.hpp"

namespace egqn::scene {
namespace {

namespace fs = std::filesystem;
using geometry::Intrinsics;
using geometry::Pose;

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("egqn_scene_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) { return read_file(p.string()); }

std::array<int, 3> pixel(const std::vector<std::uint8_t>& rgb, int width, int i, int j) {
  const std::size_t k = (static_cast<std::size_t>(i) * width + j) * 3;
  return {rgb[k], rgb[k + 1], rgb[k + 2]};
}

TEST(SampleScene, SameSeedSameSpec) {
  for (std::uint64_t seed : {0ULL, 1ULL, 0xdeadbeefULL}) {
    const auto a = sample_scene(seed);
    const auto b = sample_scene(seed);
    ASSERT_EQ(a.objects.size(), b.objects.size());
    EXPECT_EQ(a.wall_color, b.wall_color);
    EXPECT_EQ(a.floor_color, b.floor_color);
    EXPECT_EQ(a.light_direction, b.light_direction);
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
      EXPECT_EQ(a.objects[i].kind, b.objects[i].kind);
      EXPECT_EQ(a.objects[i].center, b.objects[i].center);
      EXPECT_EQ(a.objects[i].color, b.objects[i].color);
      EXPECT_EQ(a.objects[i].radius, b.objects[i].radius);
      EXPECT_EQ(a.objects[i].half_extent, b.objects[i].half_extent);
    }
  }
}

TEST(SampleScene, ObjectCountUniformWithinThreeSigma) {
  constexpr int kSeeds = 10000;
  std::array<int, 4> hist{};
  for (int s = 0; s < kSeeds; ++s) {
    const auto n = sample_scene(static_cast<std::uint64_t>(s)).objects.size();
    ASSERT_GE(n, 1u);
    ASSERT_LE(n, 3u);
    ++hist[n];
  }
  const double p = 1.0 / 3.0;
  const double mean = kSeeds * p;
  const double sigma = std::sqrt(kSeeds * p * (1 - p));
  for (int n = 1; n <= 3; ++n) EXPECT_LE(std::abs(hist[n] - mean), 3 * sigma) << "count " << n;
}

TEST(SampleScene, ObjectsInsideRoomAndColorsInRange) {
  for (int s = 0; s < 10000; ++s) {
    const auto spec = sample_scene(static_cast<std::uint64_t>(s) * 7919);
    const double r = spec.room_half_size;
    EXPECT_NEAR(spec.light_direction.norm(), 1.0, 1e-12);
    for (const Color& c : {spec.wall_color, spec.floor_color}) {
      ASSERT_TRUE((c.array() >= 0).all() && (c.array() <= 1).all());
    }
    for (const auto& obj : spec.objects) {
      const auto lo = obj.lower();
      const auto hi = obj.upper();
      ASSERT_GE(lo.x(), -r);
      ASSERT_GE(lo.y(), -r);
      ASSERT_GE(lo.z(), 0.0);
      ASSERT_LE(hi.x(), r);
      ASSERT_LE(hi.y(), r);
      ASSERT_LE(hi.z(), spec.wall_height());
      ASSERT_TRUE((obj.color.array() >= 0).all() && (obj.color.array() <= 1).all());
    }
  }
}

TEST(RenderView, EmptyRoomFacingWallIsConstant) {
  SceneSpec spec;
  spec.wall_color = {0.3, 0.6, 0.9};
  spec.floor_color = {0.1, 0.1, 0.1};
  spec.light_direction = Eigen::Vector3d(-0.6, 0.0, 0.8);
  const Pose pose = Pose::look_at({0.5, 0, 0.5}, {2, 0, 0.5}, {0, 0, 1});
  const auto intr = Intrinsics::from_fov(32, 60);
  const auto rgb = render_view(spec, pose, intr);
  // Wall x = +R faces -x; its shade is wall * min(1, 0.2 + 0.6).
  std::array<int, 3> expected;
  for (int c = 0; c < 3; ++c) expected[c] = static_cast<int>(std::lround(spec.wall_color[c] * 0.8 * 255));
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) ASSERT_EQ(pixel(rgb, 32, i, j), expected) << i << "," << j;
  }
}

TEST(RenderView, CenteredSphereIsMirrorSymmetric) {
  SceneSpec spec;
  spec.wall_color = {0.7, 0.7, 0.2};
  spec.floor_color = {0.2, 0.3, 0.4};
  spec.light_direction = Eigen::Vector3d(0, -0.6, 0.8);
  Primitive ball;
  ball.kind = Primitive::Kind::kSphere;
  ball.radius = 0.3;
  ball.center = {0, 0, 0.3};
  ball.color = {0.9, 0.1, 0.2};
  spec.objects.push_back(ball);
  const Pose pose = Pose::look_at({0, -2.5, 1.6}, {0, 0, 0.3}, {0, 0, 1});
  const auto intr = Intrinsics::from_fov(32, 60);
  const auto rgb = render_view(spec, pose, intr);
  int sphere_pixels = 0;
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) {
      ASSERT_EQ(pixel(rgb, 32, i, j), pixel(rgb, 32, i, 31 - j)) << i << "," << j;
      const auto hit = trace(spec, geometry::pixel_ray({i + 0.5, j + 0.5}, pose, intr));
      sphere_pixels += hit && hit->object == 0;
    }
  }
  EXPECT_GT(sphere_pixels, 20);
}

TEST(RenderView, BoxFaceNormalsFollowEntryFace) {
  SceneSpec spec;
  Primitive box;
  box.kind = Primitive::Kind::kBox;
  box.center = {0, 0, 0.2};
  box.half_extent = {0.2, 0.2, 0.2};
  spec.objects.push_back(box);
  const auto top = trace(spec, {{0.05, 0.02, 3.0}, {0, 0, -1}});
  ASSERT_TRUE(top);
  EXPECT_EQ(top->object, 0);
  EXPECT_NEAR(top->distance, 2.6, 1e-12);
  EXPECT_EQ(top->normal, Eigen::Vector3d(0, 0, 1));
  const auto side = trace(spec, {{-0.9, 0.0, 0.1}, {1, 0, 0}});
  ASSERT_TRUE(side);
  EXPECT_EQ(side->normal, Eigen::Vector3d(-1, 0, 0));
  EXPECT_NEAR(side->point.x(), -0.2, 1e-12);
}

TEST(RenderView, WallsAreInvisibleFromOutside) {
  SceneSpec spec;
  // Ray from outside through the x = -R wall lands on the far wall x = +R.
  const auto hit = trace(spec, {{-3.0, 0.0, 0.5}, {1, 0, 0}});
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->point.x(), spec.room_half_size, 1e-12);
  EXPECT_EQ(hit->normal, Eigen::Vector3d(-1, 0, 0));
  // Above the walls nothing is hit and the background shows the raw wall color.
  const auto miss = trace(spec, {{-3.0, 0.0, 1.5}, {1, 0, 0}});
  EXPECT_FALSE(miss);
  EXPECT_EQ(shade(spec, miss), spec.wall_color);
}

TEST(RenderView, SpherePointsKeepTheirHueAcrossViews) {
  GenerationConfig cfg;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto rec = generate_scene(seed, cfg);
    const auto spec = sample_scene(seed);
    for (std::size_t obj = 0; obj < spec.objects.size(); ++obj) {
      const auto& s = spec.objects[obj];
      if (s.kind != Primitive::Kind::kSphere) continue;
      for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Vector3d p = s.center + s.radius * Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
        std::vector<std::array<int, 3>> seen;
        for (const auto& view : rec.views) {
          const Eigen::Vector3d to_p = p - view.pose.translation;
          const auto direct = trace(spec, {view.pose.translation, to_p.normalized()});
          if (!direct || direct->object != static_cast<int>(obj) || std::abs(direct->distance - to_p.norm()) > 1e-6) {
            continue;
          }
          const auto px = geometry::project_point(p, view.pose, rec.intrinsics);
          const int i = static_cast<int>(std::floor(px.h));
          const int j = static_cast<int>(std::floor(px.w));
          if (i < 0 || j < 0 || i >= cfg.image_size || j >= cfg.image_size) continue;
          const auto center = trace(spec, geometry::pixel_ray({i + 0.5, j + 0.5}, view.pose, rec.intrinsics));
          if (!center || center->object != static_cast<int>(obj)) continue;
          seen.push_back(pixel(view.rgb, cfg.image_size, i, j));
        }
        if (seen.size() < 2) continue;
        // Every observation must be 255 * color * k for some k in [0.2, 1].
        for (const auto& px : seen) {
          double lo = 0.2, hi = 1.0;
          for (int c = 0; c < 3; ++c) {
            const double base = 255.0 * s.color[c];
            if (base < 1e-9) {
              ASSERT_EQ(px[c], 0);
              continue;
            }
            lo = std::max(lo, (px[c] - 0.5) / base);
            hi = std::min(hi, (px[c] + 0.5) / base);
          }
          ASSERT_LE(lo, hi + 1e-9) << "pixel is not a shade of the sphere color";
        }
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 30);
}

TEST(SceneGeometry, HitPointsSatisfyEpipolarConstraint) {
  GenerationConfig cfg;
  double worst = 0.0;
  int checked = 0;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto rec = generate_scene(seed, cfg);
    const auto spec = sample_scene(seed);
    for (std::size_t a = 0; a < rec.views.size(); ++a) {
      for (std::size_t b = 0; b < rec.views.size(); ++b) {
        if (a == b) continue;
        const auto f = geometry::fundamental_matrix(rec.views[a].pose, rec.views[b].pose, rec.intrinsics,
                                                    rec.intrinsics);
        for (int i = 1; i < cfg.image_size; i += 5) {
          for (int j = 2; j < cfg.image_size; j += 5) {
            const auto hit = trace(spec, geometry::pixel_ray({i + 0.5, j + 0.5}, rec.views[a].pose, rec.intrinsics));
            if (!hit) continue;
            const Eigen::Vector3d local = rec.views[b].pose.to_camera(hit->point);
            if (local.z() <= 1e-3) continue;
            const auto proj = geometry::project_point(hit->point, rec.views[b].pose, rec.intrinsics);
            if (proj.h < 0 || proj.w < 0 || proj.h >= cfg.image_size || proj.w >= cfg.image_size) continue;
            const auto line = geometry::epipolar_line(f, {i + 0.5, j + 0.5});
            worst = std::max(worst, std::abs(line.evaluate(proj)));
            ++checked;
          }
        }
      }
    }
  }
  EXPECT_GT(checked, 1000);
  EXPECT_LT(worst, 0.5);
}

TEST(Generation, PosesAreFloatExactAndLookAtTheRoom) {
  GenerationConfig cfg;
  const auto rec = generate_scene(42, cfg);
  ASSERT_EQ(rec.views.size(), 8u);
  for (const auto& v : rec.views) {
    EXPECT_EQ(v.pose.rotation, v.pose.rotation.cast<float>().cast<double>());
    EXPECT_EQ(v.pose.translation, v.pose.translation.cast<float>().cast<double>());
    v.pose.validate(1e-6);
    EXPECT_NEAR(v.pose.translation.head<2>().norm(), 2.5, 1e-6);
    // Room center projects near the image center.
    const auto c = geometry::project_point({0, 0, 0.3}, v.pose, rec.intrinsics);
    EXPECT_NEAR(c.h, 16.0, 4.0);
    EXPECT_NEAR(c.w, 16.0, 4.0);
  }
}

TEST(Generation, ParallelMatchesSequential) {
  GenerationConfig cfg;
  cfg.image_size = 16;
  const auto seq = generate_scenes(9, 12, cfg, 1);
  const auto par = generate_scenes(9, 12, cfg, 4);
  EXPECT_EQ(seq, par);
  const auto d1 = scratch_dir("seq");
  const auto d2 = scratch_dir("par");
  write_dataset(d1, cfg, seq, 5);
  write_dataset(d2, cfg, par, 5);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(file_bytes(chunk_path(d1, c)), file_bytes(chunk_path(d2, c)));
  EXPECT_EQ(file_bytes(d1 / "manifest.json"), file_bytes(d2 / "manifest.json"));
}

TEST(Generation, SceneSeedsAreDistinct) {
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 1000; ++i) seeds.insert(scene_seed(5, i));
  for (std::size_t i = 0; i < 1000; ++i) seeds.insert(scene_seed(6, i));
  EXPECT_EQ(seeds.size(), 2000u);
}

TEST(Dataset, RoundTripIsBitExact) {
  GenerationConfig cfg;
  const auto scenes = generate_scenes(3, 10, cfg, 1);
  const auto dir = scratch_dir("roundtrip");
  write_dataset(dir, cfg, scenes, 4);
  const auto ds = read_dataset(dir);
  EXPECT_EQ(ds.info.scene_count, 10u);
  EXPECT_EQ(ds.info.chunk_size, 4u);
  EXPECT_EQ(ds.info.image_size, 32);
  EXPECT_EQ(ds.info.views_per_scene, 8);
  EXPECT_EQ(ds.info.intrinsics.focal_h, cfg.intrinsics().focal_h);
  ASSERT_EQ(ds.scenes.size(), scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) EXPECT_TRUE(ds.scenes[i] == scenes[i]) << "scene " << i;
  EXPECT_TRUE(fs::exists(chunk_path(dir, 2)));
  EXPECT_FALSE(fs::exists(chunk_path(dir, 3)));
}

TEST(Dataset, EveryCorruptedByteIsDetected) {
  GenerationConfig cfg;
  cfg.image_size = 8;
  cfg.views_per_scene = 4;
  const auto scenes = generate_scenes(4, 2, cfg, 1);
  const auto dir = scratch_dir("corrupt");
  write_dataset(dir, cfg, scenes, 8);
  const auto path = chunk_path(dir, 0);
  const auto original = file_bytes(path);
  std::mt19937_64 rng(1);
  for (std::size_t pos = 0; pos < original.size(); pos += 7) {
    auto bytes = original;
    bytes[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    write_file(path.string(), bytes);
    try {
      read_dataset(dir);
      ADD_FAILURE() << "corruption at byte " << pos << " went unnoticed";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
    }
  }
}

TEST(Dataset, TruncationAndTrailingBytesAreFormatErrors) {
  GenerationConfig cfg;
  cfg.image_size = 8;
  cfg.views_per_scene = 3;
  const auto scenes = generate_scenes(4, 3, cfg, 1);
  const auto dir = scratch_dir("truncate");
  write_dataset(dir, cfg, scenes);
  const auto path = chunk_path(dir, 0);
  const auto original = file_bytes(path);
  auto shorter = original;
  shorter.resize(original.size() - 5);
  write_file(path.string(), shorter);
  EXPECT_THROW(read_dataset(dir), FormatError);
  auto longer = original;
  longer.push_back(0);
  write_file(path.string(), longer);
  EXPECT_THROW(read_dataset(dir), FormatError);
  fs::remove(path);
  EXPECT_THROW(read_dataset(dir), FormatError);
}

TEST(Dataset, ManifestErrors) {
  GenerationConfig cfg;
  cfg.image_size = 8;
  const auto dir = scratch_dir("manifest");
  write_dataset(dir, cfg, generate_scenes(1, 1, cfg, 1));
  std::ifstream in(dir / "manifest.json");
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  auto rewrite = [&](const std::string& body) { std::ofstream(dir / "manifest.json") << body; };
  std::string bumped = text;
  bumped.replace(bumped.find("\"format_version\": 1"), 19, "\"format_version\": 2");
  rewrite(bumped);
  EXPECT_THROW(read_dataset(dir), FormatError);
  rewrite("{ not json");
  EXPECT_THROW(read_dataset(dir), FormatError);
  fs::remove(dir / "manifest.json");
  EXPECT_THROW(read_dataset(dir), FormatError);
}

TEST(Dataset, EmptyDatasetHasManifestAndNoChunks) {
  GenerationConfig cfg;
  const auto dir = scratch_dir("empty");
  write_dataset(dir, cfg, {});
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_FALSE(fs::exists(chunk_path(dir, 0)));
  const auto ds = read_dataset(dir);
  EXPECT_EQ(ds.info.scene_count, 0u);
  EXPECT_EQ(ds.info.image_size, 32);
  EXPECT_TRUE(ds.scenes.empty());
}

TEST(Dataset, WriterRejectsMismatchedRecords) {
  GenerationConfig cfg;
  cfg.image_size = 8;
  auto scenes = generate_scenes(2, 2, cfg, 1);
  GenerationConfig other = cfg;
  other.views_per_scene = 7;
  EXPECT_THROW(write_dataset(scratch_dir("bad1"), other, scenes), std::invalid_argument);
  scenes[1].views[0].rgb.pop_back();
  EXPECT_THROW(write_dataset(scratch_dir("bad2"), cfg, scenes), std::invalid_argument);
}

}  // namespace
}  // namespace egqn::scene
