#include "egqn/model/config.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace egqn::model {

std::string to_string(Mode mode) { return mode == Mode::kGqn ? "gqn" : "egqn"; }

Mode parse_mode(const std::string& text) {
  if (text == "gqn") return Mode::kGqn;
  if (text == "egqn") return Mode::kEgqn;
  throw std::invalid_argument("unknown mode '" + text + "' (expected gqn or egqn)");
}

void ModelConfig::validate() const {
  if (image_size < 4 || image_size % 4 != 0) {
    throw std::invalid_argument("image size must be a positive multiple of 4, got " + std::to_string(image_size));
  }
  for (const auto& [name, value] :
       {std::pair{"feature_dim", feature_dim}, {"decoder_channels", decoder_channels},
        {"canvas_channels", canvas_channels}, {"steps", steps}, {"contexts", contexts}, {"key_dim", key_dim},
        {"value_dim", value_dim}, {"latent_channels", latent_channels},
        {"query_feature_channels", query_feature_channels}}) {
    if (value < 1) throw std::invalid_argument(std::string(name) + " must be >= 1");
  }
  if (feature_dim % 2 != 0) throw std::invalid_argument("feature_dim must be even");
  if (!(output_std > 0.0) || !std::isfinite(output_std)) throw std::invalid_argument("output_std must be positive");
}

double elbo_floor(double output_std) {
  return std::log(output_std * std::sqrt(2.0 * std::numbers::pi));
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size},
                     {"feature_dim", c.feature_dim},
                     {"decoder_channels", c.decoder_channels},
                     {"canvas_channels", c.canvas_channels},
                     {"steps", c.steps},
                     {"contexts", c.contexts},
                     {"key_dim", c.key_dim},
                     {"value_dim", c.value_dim},
                     {"latent_channels", c.latent_channels},
                     {"query_feature_channels", c.query_feature_channels},
                     {"output_std", c.output_std},
                     {"mode", to_string(c.mode)},
                     {"mask_empty", c.mask_empty}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.image_size = j.value("image_size", d.image_size);
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.canvas_channels = j.value("canvas_channels", d.canvas_channels);
  c.steps = j.value("steps", d.steps);
  c.contexts = j.value("contexts", d.contexts);
  c.key_dim = j.value("key_dim", d.key_dim);
  c.value_dim = j.value("value_dim", d.value_dim);
  c.latent_channels = j.value("latent_channels", d.latent_channels);
  c.query_feature_channels = j.value("query_feature_channels", d.query_feature_channels);
  c.output_std = j.value("output_std", d.output_std);
  c.mode = parse_mode(j.value("mode", to_string(d.mode)));
  c.mask_empty = j.value("mask_empty", d.mask_empty);
}

}  // namespace egqn::model
