#include "egqn/scene/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <thread>

#include "egqn/common/binary_io.hpp"
#include "egqn/common/hash.hpp"

namespace egqn::scene {

namespace {

constexpr const char* kManifest = "manifest.json";

void write_view(ByteWriter& w, const View& v) {
  // [R | t] row-major, then t again.
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) w.f32(static_cast<float>(v.pose.rotation(r, c)));
    w.f32(static_cast<float>(v.pose.translation[r]));
  }
  for (int r = 0; r < 3; ++r) w.f32(static_cast<float>(v.pose.translation[r]));
  w.raw(v.rgb);
}

View read_view(ByteReader& r, std::size_t pixels, const std::string& what) {
  View v;
  Eigen::Vector3d t_block;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) v.pose.rotation(i, c) = r.f32();
    t_block[i] = r.f32();
  }
  for (int i = 0; i < 3; ++i) v.pose.translation[i] = r.f32();
  if (t_block != v.pose.translation) throw FormatError(what + ": translation copies disagree");
  auto bytes = r.raw(pixels * 3);
  v.rgb.assign(bytes.begin(), bytes.end());
  return v;
}

nlohmann::json manifest_json(const DatasetInfo& info) {
  return {{"format_version", info.format_version},
          {"image_size", info.image_size},
          {"views_per_scene", info.views_per_scene},
          {"intrinsics",
           {{"focal", {info.intrinsics.focal_h, info.intrinsics.focal_w}},
            {"center", {info.intrinsics.center_h, info.intrinsics.center_w}}}},
          {"scene_count", info.scene_count},
          {"chunk_size", info.chunk_size}};
}

DatasetInfo parse_manifest(const std::filesystem::path& path) {
  const std::string what = "manifest " + path.string();
  std::ifstream in(path);
  if (!in) throw FormatError(what + ": cannot open");
  DatasetInfo info;
  try {
    const auto j = nlohmann::json::parse(in);
    info.format_version = j.at("format_version").get<int>();
    if (info.format_version != kDatasetFormatVersion) {
      throw FormatError(what + ": unsupported format_version " + std::to_string(info.format_version));
    }
    info.image_size = j.at("image_size").get<int>();
    info.views_per_scene = j.at("views_per_scene").get<int>();
    const auto& intr = j.at("intrinsics");
    const auto focal = intr.at("focal").get<std::vector<double>>();
    const auto center = intr.at("center").get<std::vector<double>>();
    if (focal.size() != 2 || center.size() != 2) throw FormatError(what + ": focal and center need two entries");
    info.intrinsics = {focal[0], focal[1], center[0], center[1], info.image_size, info.image_size};
    info.scene_count = j.at("scene_count").get<std::size_t>();
    info.chunk_size = j.at("chunk_size").get<std::size_t>();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
  if (info.image_size <= 0 || info.views_per_scene <= 0 || info.views_per_scene > 0xffff || info.chunk_size == 0) {
    throw FormatError(what + ": invalid sizes");
  }
  try {
    info.intrinsics.validate();
  } catch (const std::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
  return info;
}

}  // namespace

bool View::operator==(const View& other) const {
  return pose.rotation == other.pose.rotation && pose.translation == other.pose.translation && rgb == other.rgb;
}

bool SceneRecord::operator==(const SceneRecord& other) const {
  const auto& a = intrinsics;
  const auto& b = other.intrinsics;
  return seed == other.seed && a.focal_h == b.focal_h && a.focal_w == b.focal_w && a.center_h == b.center_h &&
         a.center_w == b.center_w && a.image_h == b.image_h && a.image_w == b.image_w && views == other.views;
}

void GenerationConfig::validate() const {
  if (image_size <= 0) throw std::invalid_argument("image_size must be positive");
  if (views_per_scene <= 0 || views_per_scene > 0xffff) throw std::invalid_argument("views_per_scene out of range");
  if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) throw std::invalid_argument("fov must lie in (0, 180) degrees");
}

std::uint64_t scene_seed(std::uint64_t root_seed, std::size_t index) { return derive_seed(root_seed, index); }

SceneRecord generate_scene(std::uint64_t seed, const GenerationConfig& cfg) {
  cfg.validate();
  SceneRecord rec;
  rec.seed = seed;
  rec.intrinsics = cfg.intrinsics();
  const SceneSpec spec = sample_scene(seed);
  for (const auto& pose : sample_cameras(spec, cfg.views_per_scene, seed, cfg.ring)) {
    rec.views.push_back({pose, render_view(spec, pose, rec.intrinsics)});
  }
  return rec;
}

std::vector<SceneRecord> generate_scenes(std::uint64_t root_seed, std::size_t count, const GenerationConfig& cfg,
                                         unsigned threads) {
  cfg.validate();
  std::vector<SceneRecord> out(count);
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  auto run = [&](unsigned worker) {
    for (std::size_t i = worker; i < count; i += workers) out[i] = generate_scene(scene_seed(root_seed, i), cfg);
  };
  if (workers == 1) {
    run(0);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  for (auto& t : pool) t.join();
  return out;
}

std::filesystem::path chunk_path(const std::filesystem::path& dir, std::size_t chunk) {
  char name[32];
  std::snprintf(name, sizeof name, "chunk-%05zu.bin", chunk);
  return dir / name;
}

void write_dataset(const std::filesystem::path& dir, const GenerationConfig& cfg,
                   std::span<const SceneRecord> records, std::size_t chunk_size) {
  cfg.validate();
  if (chunk_size == 0) throw std::invalid_argument("chunk_size must be positive");
  DatasetInfo info;
  info.chunk_size = chunk_size;
  info.scene_count = records.size();
  info.intrinsics = cfg.intrinsics();
  info.image_size = cfg.image_size;
  info.views_per_scene = cfg.views_per_scene;
  const std::size_t pixels = static_cast<std::size_t>(info.image_size) * info.image_size;
  for (const auto& rec : records) {
    SceneRecord probe{rec.seed, info.intrinsics, rec.views};
    if (!(probe == rec)) throw std::invalid_argument("scene intrinsics differ from the generation config");
    if (static_cast<int>(rec.views.size()) != info.views_per_scene) {
      throw std::invalid_argument("scene view count differs from the generation config");
    }
    for (const auto& v : rec.views) {
      if (v.rgb.size() != pixels * 3) throw std::invalid_argument("view image has the wrong size");
    }
  }

  std::filesystem::create_directories(dir);
  const std::size_t chunks = (records.size() + chunk_size - 1) / chunk_size;
  for (std::size_t c = 0; c < chunks; ++c) {
    ByteWriter w;
    const std::size_t end = std::min(records.size(), (c + 1) * chunk_size);
    for (std::size_t i = c * chunk_size; i < end; ++i) {
      const std::size_t start = w.size();
      w.u64(records[i].seed);
      w.u16(static_cast<std::uint16_t>(records[i].views.size()));
      for (const auto& v : records[i].views) write_view(w, v);
      w.u32(crc32(std::span<const std::uint8_t>(w.bytes()).subspan(start)));
    }
    write_file(chunk_path(dir, c).string(), w.bytes());
  }
  const std::string manifest = manifest_json(info).dump(2) + "\n";
  write_file((dir / kManifest).string(),
             std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(manifest.data()), manifest.size()));
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.info = parse_manifest(dir / kManifest);
  const auto& info = ds.info;
  const std::size_t pixels = static_cast<std::size_t>(info.image_size) * info.image_size;
  const std::size_t chunks = (info.scene_count + info.chunk_size - 1) / info.chunk_size;
  const std::size_t record_bytes = 8 + 2 + static_cast<std::size_t>(info.views_per_scene) * (15 * 4 + pixels * 3);
  ds.scenes.reserve(info.scene_count);
  for (std::size_t c = 0; c < chunks; ++c) {
    const auto path = chunk_path(dir, c);
    if (!std::filesystem::exists(path)) throw FormatError("dataset " + dir.string() + ": missing " + path.string());
    const auto bytes = read_file(path.string());
    const std::string what = "chunk " + path.string();
    ByteReader r(bytes, what);
    const std::size_t end = std::min(info.scene_count, (c + 1) * info.chunk_size);
    for (std::size_t i = c * info.chunk_size; i < end; ++i) {
      const std::size_t start = r.position();
      if (r.remaining() < record_bytes + 4) throw FormatError(what + ": truncated in scene " + std::to_string(i));
      const auto record = std::span<const std::uint8_t>(bytes).subspan(start, record_bytes);
      ByteReader stored(std::span<const std::uint8_t>(bytes).subspan(start + record_bytes, 4), what);
      if (stored.u32() != crc32(record)) throw FormatError(what + ": checksum mismatch in scene " + std::to_string(i));
      SceneRecord rec;
      rec.intrinsics = info.intrinsics;
      rec.seed = r.u64();
      const auto views = r.u16();
      if (views != info.views_per_scene) {
        throw FormatError(what + ": scene " + std::to_string(i) + " has " + std::to_string(views) + " views, expected " +
                          std::to_string(info.views_per_scene));
      }
      std::vector<View> parsed;
      for (int v = 0; v < views; ++v) parsed.push_back(read_view(r, pixels, what));
      r.u32();
      rec.views = std::move(parsed);
      ds.scenes.push_back(std::move(rec));
    }
    if (r.remaining() != 0) throw FormatError(what + ": trailing bytes");
  }
  if (std::filesystem::exists(chunk_path(dir, chunks))) {
    throw FormatError("dataset " + dir.string() + ": more chunk files than the manifest lists");
  }
  return ds;
}

}  // namespace egqn::scene
