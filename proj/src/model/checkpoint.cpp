#include "egqn/model/checkpoint.hpp"

#include "egqn/common/binary_io.hpp"

namespace egqn::model {

namespace {
constexpr char kMagic[] = "EGQNCKPT";
constexpr std::size_t kMagicLen = 8;
}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamStore<float>& params,
                     const nlohmann::json& metadata) {
  ByteWriter w;
  w.text(std::string(kMagic, kMagicLen));
  w.u32(kCheckpointVersion);
  const std::string header = nlohmann::json{{"config", config}, {"metadata", metadata}}.dump();
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.text(header);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.names()[i];
    const auto& a = params[i];
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.text(name);
    w.u8(static_cast<std::uint8_t>(a.rank()));
    for (auto d : a.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : a.data()) w.f32(v);
  }
  w.u32(crc32(w.bytes()));
  write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  const std::string what = "checkpoint " + path;
  if (bytes.size() < kMagicLen + 8) throw FormatError(what + ": file too short");
  const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 4);
  ByteReader tail(std::span<const std::uint8_t>(bytes).last(4), what);
  if (tail.u32() != crc32(body)) throw FormatError(what + ": checksum mismatch");

  ByteReader r(body, what);
  if (r.text(kMagicLen) != std::string(kMagic, kMagicLen)) throw FormatError(what + ": bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(r.text(r.u32()));
    ck.config = header.at("config").get<ModelConfig>();
    ck.metadata = header.value("metadata", nlohmann::json::object());
    ck.config.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(what + ": bad header: " + e.what());
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.text(r.u16());
    const auto rank = r.u8();
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<float> values(ad::numel(shape));
    for (auto& v : values) v = r.f32();
    ck.params.add(name, ad::Array<float>(shape, std::move(values), true));
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes");

  const auto specs = param_specs(ck.config);
  if (specs.size() != ck.params.size()) {
    throw FormatError(what + ": holds " + std::to_string(ck.params.size()) + " arrays, configuration needs " +
                      std::to_string(specs.size()));
  }
  for (const auto& s : specs) {
    if (!ck.params.contains(s.name)) throw FormatError(what + ": missing parameter " + s.name);
    if (ck.params.at(s.name).shape() != s.shape) {
      throw FormatError(what + ": parameter " + s.name + " has shape " + ad::to_string(ck.params.at(s.name).shape()) +
                        ", expected " + ad::to_string(s.shape));
    }
  }
  return ck;
}

}  // namespace egqn::model
