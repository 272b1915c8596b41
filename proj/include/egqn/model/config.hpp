#pragma once

#include <json.hpp>

#include <string>

namespace egqn::model {

enum class Mode { kGqn, kEgqn };

std::string to_string(Mode mode);
// Throws std::invalid_argument for anything other than "gqn" / "egqn".
Mode parse_mode(const std::string& text);

struct ModelConfig {
  int image_size = 32;
  int feature_dim = 64;       // channels of each context representation
  int decoder_channels = 64;  // generator and inference LSTM width
  int canvas_channels = 64;   // full-resolution skip canvas
  int steps = 6;
  int contexts = 3;
  int key_dim = 32;
  int value_dim = 64;
  int latent_channels = 3;
  int query_feature_channels = 16;  // downsampled target fed to the posterior
  double output_std = 1.4;
  Mode mode = Mode::kEgqn;
  bool mask_empty = false;

  int grid() const { return image_size / 4; }
  std::size_t output_dims() const {
    return static_cast<std::size_t>(image_size) * image_size * 3;
  }
  // Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

// Negative ELBO per dimension when the mean is exact and the KL term is zero.
double elbo_floor(double output_std);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace egqn::model
