#include "egqn/scene/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "egqn/common/hash.hpp"

namespace egqn::scene {

namespace {

constexpr double kMinDistance = 1e-9;
constexpr double kAmbient = 0.2;

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng), u(rng), u(rng)};
}

void consider(std::optional<Hit>& best, double t, const geometry::Ray& ray, const Eigen::Vector3d& normal,
              const Color& color, int object) {
  if (!(t > kMinDistance)) return;
  if (best && best->distance <= t) return;
  best = Hit{t, ray.origin + t * ray.direction, normal, color, object};
}

std::optional<double> hit_sphere(const Primitive& s, const geometry::Ray& ray) {
  const Eigen::Vector3d oc = ray.origin - s.center;
  const double b = oc.dot(ray.direction);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double near = -b - root;
  if (near > kMinDistance) return near;
  const double far = -b + root;
  if (far > kMinDistance) return far;
  return std::nullopt;
}

std::optional<std::pair<double, Eigen::Vector3d>> hit_box(const Primitive& box, const geometry::Ray& ray) {
  const Eigen::Vector3d lo = box.lower();
  const Eigen::Vector3d hi = box.upper();
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  int enter_axis = -1;
  double enter_sign = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double o = ray.origin[axis];
    const double d = ray.direction[axis];
    if (d == 0.0) {
      if (o < lo[axis] || o > hi[axis]) return std::nullopt;
      continue;
    }
    double t0 = (lo[axis] - o) / d;
    double t1 = (hi[axis] - o) / d;
    double sign = -1.0;  // entering through the lower face
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1.0;
    }
    if (t0 > t_enter) {
      t_enter = t0;
      enter_axis = axis;
      enter_sign = sign;
    }
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_exit <= kMinDistance || enter_axis < 0 || t_enter <= kMinDistance) {
    return std::nullopt;
  }
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  n[enter_axis] = enter_sign;
  return std::pair{t_enter, n};
}

}  // namespace

Eigen::Vector3d Primitive::lower() const {
  return kind == Kind::kSphere ? Eigen::Vector3d(center.array() - radius) : Eigen::Vector3d(center - half_extent);
}

Eigen::Vector3d Primitive::upper() const {
  return kind == Kind::kSphere ? Eigen::Vector3d(center.array() + radius) : Eigen::Vector3d(center + half_extent);
}

SceneSpec sample_scene(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneSpec spec;
  spec.seed = seed;
  const double r = spec.room_half_size;
  spec.wall_color = random_color(rng);
  spec.floor_color = random_color(rng);
  const int count = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int i = 0; i < count; ++i) {
    Primitive p;
    p.kind = u(rng) < 0.5 ? Primitive::Kind::kSphere : Primitive::Kind::kBox;
    Eigen::Vector3d half;
    if (p.kind == Primitive::Kind::kSphere) {
      p.radius = r * (0.15 + 0.2 * u(rng));
      half = Eigen::Vector3d::Constant(p.radius);
    } else {
      p.half_extent = Eigen::Vector3d(r * (0.12 + 0.18 * u(rng)), r * (0.12 + 0.18 * u(rng)),
                                      r * (0.12 + 0.18 * u(rng)));
      half = p.half_extent;
    }
    p.center = Eigen::Vector3d((2.0 * u(rng) - 1.0) * (r - half.x()), (2.0 * u(rng) - 1.0) * (r - half.y()), half.z());
    p.color = random_color(rng);
    spec.objects.push_back(p);
  }
  const double azimuth = 2.0 * std::numbers::pi * u(rng);
  const double elevation = std::asin(0.3 + 0.7 * u(rng));
  spec.light_direction = Eigen::Vector3d(std::cos(elevation) * std::cos(azimuth),
                                         std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
  return spec;
}

std::optional<Hit> trace(const SceneSpec& spec, const geometry::Ray& ray) {
  std::optional<Hit> best;
  const double r = spec.room_half_size;
  const auto& o = ray.origin;
  const auto& d = ray.direction;
  // Floor, seen from above.
  if (d.z() < 0.0) {
    const double t = -o.z() / d.z();
    const Eigen::Vector3d p = o + t * d;
    if (std::abs(p.x()) <= r && std::abs(p.y()) <= r) consider(best, t, ray, {0, 0, 1}, spec.floor_color, -1);
  }
  // Walls, front faces only (normals point into the room).
  for (int axis = 0; axis < 2; ++axis) {
    for (double side : {-1.0, 1.0}) {
      const double dir = d[axis] * side;
      if (!(dir > 0.0)) continue;
      const double t = (side * r - o[axis]) / d[axis];
      const Eigen::Vector3d p = o + t * d;
      const int other = 1 - axis;
      if (std::abs(p[other]) > r || p.z() < 0.0 || p.z() > spec.wall_height()) continue;
      Eigen::Vector3d n = Eigen::Vector3d::Zero();
      n[axis] = -side;
      consider(best, t, ray, n, spec.wall_color, -1);
    }
  }
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& obj = spec.objects[i];
    if (obj.kind == Primitive::Kind::kSphere) {
      if (auto t = hit_sphere(obj, ray)) {
        const Eigen::Vector3d p = o + *t * d;
        consider(best, *t, ray, (p - obj.center) / obj.radius, obj.color, static_cast<int>(i));
      }
    } else if (auto h = hit_box(obj, ray)) {
      consider(best, h->first, ray, h->second, obj.color, static_cast<int>(i));
    }
  }
  return best;
}

Color shade(const SceneSpec& spec, const std::optional<Hit>& hit) {
  if (!hit) return spec.wall_color;
  const double diffuse = std::max(0.0, hit->normal.dot(spec.light_direction));
  return hit->color * std::min(1.0, kAmbient + diffuse);
}

std::uint8_t to_byte(double channel) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(channel, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> render_view(const SceneSpec& spec, const geometry::Pose& pose,
                                      const geometry::Intrinsics& intr) {
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(intr.image_h) * intr.image_w * 3);
  std::size_t k = 0;
  for (int i = 0; i < intr.image_h; ++i) {
    for (int j = 0; j < intr.image_w; ++j) {
      const Color c = shade(spec, trace(spec, geometry::pixel_ray({i + 0.5, j + 0.5}, pose, intr)));
      for (int ch = 0; ch < 3; ++ch) rgb[k++] = to_byte(c[ch]);
    }
  }
  return rgb;
}

geometry::Pose round_to_float(const geometry::Pose& pose) {
  geometry::Pose out;
  out.rotation = pose.rotation.cast<float>().cast<double>();
  out.translation = pose.translation.cast<float>().cast<double>();
  return out;
}

std::vector<geometry::Pose> sample_cameras(const SceneSpec& spec, int count, std::uint64_t seed,
                                           const CameraRing& ring) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x5ca1ab1e0ddba11ULL));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = spec.room_half_size;
  std::vector<geometry::Pose> poses;
  poses.reserve(static_cast<std::size_t>(count));
  for (int v = 0; v < count; ++v) {
    const double azimuth = 2.0 * std::numbers::pi * u(rng);
    const double height = ring.height_factor * r * (1.0 + ring.height_jitter * (2.0 * u(rng) - 1.0));
    const Eigen::Vector3d eye(ring.radius_factor * r * std::cos(azimuth), ring.radius_factor * r * std::sin(azimuth),
                              height);
    const Eigen::Vector3d target(ring.target_jitter * r * (2.0 * u(rng) - 1.0),
                                 ring.target_jitter * r * (2.0 * u(rng) - 1.0),
                                 ring.target_height * r + ring.target_jitter * r * (2.0 * u(rng) - 1.0));
    poses.push_back(round_to_float(geometry::Pose::look_at(eye, target, {0, 0, 1})));
  }
  return poses;
}

}  // namespace egqn::scene
