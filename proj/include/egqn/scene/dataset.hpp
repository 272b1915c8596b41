#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "egqn/geometry/camera.hpp"
#include "egqn/scene/scene.hpp"

namespace egqn::scene {

inline constexpr int kDatasetFormatVersion = 1;

struct View {
  geometry::Pose pose;
  std::vector<std::uint8_t> rgb;  // image_h * image_w * 3

  bool operator==(const View& other) const;
};

struct SceneRecord {
  std::uint64_t seed = 0;
  geometry::Intrinsics intrinsics;
  std::vector<View> views;

  bool operator==(const SceneRecord& other) const;
};

struct GenerationConfig {
  int image_size = 32;
  int views_per_scene = 8;
  double fov_degrees = 60.0;
  CameraRing ring;

  geometry::Intrinsics intrinsics() const { return geometry::Intrinsics::from_fov(image_size, fov_degrees); }
  void validate() const;
};

// Seed of the i-th scene of a dataset generated from `root_seed`.
std::uint64_t scene_seed(std::uint64_t root_seed, std::size_t index);

SceneRecord generate_scene(std::uint64_t seed, const GenerationConfig& cfg);

// Scenes root_seed/0 .. root_seed/count-1, rendered on `threads` workers.
// The result does not depend on the thread count.
std::vector<SceneRecord> generate_scenes(std::uint64_t root_seed, std::size_t count, const GenerationConfig& cfg,
                                         unsigned threads = 1);

struct DatasetInfo {
  int format_version = kDatasetFormatVersion;
  int image_size = 0;
  int views_per_scene = 0;
  geometry::Intrinsics intrinsics;
  std::size_t scene_count = 0;
  std::size_t chunk_size = 64;
};

struct Dataset {
  DatasetInfo info;
  std::vector<SceneRecord> scenes;
};

// Writes manifest.json plus chunk-00000.bin, ... into `dir` (created if
// missing). Every record must match the image size, view count and
// intrinsics of `cfg`. Poses are stored as float.
void write_dataset(const std::filesystem::path& dir, const GenerationConfig& cfg,
                   std::span<const SceneRecord> records, std::size_t chunk_size = 64);

// Throws FormatError on a bad manifest, version mismatch, truncation,
// trailing bytes or a checksum failure.
Dataset read_dataset(const std::filesystem::path& dir);

std::filesystem::path chunk_path(const std::filesystem::path& dir, std::size_t chunk);

}  // namespace egqn::scene
