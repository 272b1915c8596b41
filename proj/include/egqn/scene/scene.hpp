#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "egqn/geometry/camera.hpp"

namespace egqn::scene {

using Color = Eigen::Vector3d;

struct Primitive {
  enum class Kind { kSphere, kBox };
  Kind kind = Kind::kSphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;                                      // spheres
  Eigen::Vector3d half_extent = Eigen::Vector3d::Zero();  // boxes
  Color color = Color::Zero();

  Eigen::Vector3d lower() const;
  Eigen::Vector3d upper() const;
};

// World is Z-up. The room spans [-R, R]^2 on the floor plane z = 0 with walls
// of height R on all four sides. Walls are visible only from inside, so a
// camera outside the room sees into it as a cutaway.
struct SceneSpec {
  double room_half_size = 1.0;
  Color wall_color = Color::Constant(0.5);
  Color floor_color = Color::Constant(0.5);
  std::vector<Primitive> objects;
  Eigen::Vector3d light_direction = Eigen::Vector3d(0, 0, 1);  // towards the light
  std::uint64_t seed = 0;

  double wall_height() const { return room_half_size; }
};

// One to three objects resting on the floor, uniform colors, light from the
// upper hemisphere. Pure function of the seed.
SceneSpec sample_scene(std::uint64_t seed);

struct Hit {
  double distance = 0.0;
  Eigen::Vector3d point;
  Eigen::Vector3d normal;
  Color color;
  int object = -1;  // index into objects, or -1 for floor and walls
};

std::optional<Hit> trace(const SceneSpec& spec, const geometry::Ray& ray);

// color * min(1, 0.2 + max(0, n . l)); misses show the unshaded wall color.
Color shade(const SceneSpec& spec, const std::optional<Hit>& hit);

// Row-major RGB bytes, image_h * image_w * 3, one ray through each cell center.
std::vector<std::uint8_t> render_view(const SceneSpec& spec, const geometry::Pose& pose,
                                      const geometry::Intrinsics& intr);

std::uint8_t to_byte(double channel);

struct CameraRing {
  double radius_factor = 2.5;      // times the room half-size
  double height_factor = 1.6;      // times the room half-size
  double height_jitter = 0.15;     // fraction of the height
  double target_height = 0.3;      // times the room half-size
  double target_jitter = 0.1;      // times the room half-size, per axis
};

// Random azimuths on a ring around the room, each camera aimed near the room
// center. Poses are rounded to float precision so they survive storage
// unchanged.
std::vector<geometry::Pose> sample_cameras(const SceneSpec& spec, int count, std::uint64_t seed,
                                           const CameraRing& ring = {});

geometry::Pose round_to_float(const geometry::Pose& pose);

}  // namespace egqn::scene
