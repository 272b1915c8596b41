#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "egqn/model/config.hpp"
#include "egqn/model/network.hpp"
#include "egqn/model/params.hpp"
#include "egqn/scene/dataset.hpp"

namespace egqn::harness {

struct LearningRateSchedule {
  double initial = 2e-5;
  double peak = 1e-4;
  double floor = 1e-5;
  int warmup_steps = 500;
  int decay_steps = 20000;

  // Linear initial -> peak over the warmup, linear peak -> floor over the
  // decay, then constant.
  double at(long step) const;
  void validate() const;
};

struct TrainConfig {
  LearningRateSchedule schedule;
  int batch_size = 8;
  long total_steps = 2000;
  std::uint64_t seed = 0;
  long checkpoint_every = 500;  // 0 disables intermediate checkpoints
  bool strict_deterministic = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::string checkpoint_path;  // empty: no checkpoints
  std::string metrics_path;     // empty: no CSV

  void validate() const;
};

// Raised when the loss or a gradient stops being finite.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, long step, std::uint64_t batch_seed, std::vector<std::size_t> scenes)
      : std::runtime_error(what), step(step), batch_seed(batch_seed), scenes(std::move(scenes)) {}
  long step;
  std::uint64_t batch_seed;
  std::vector<std::size_t> scenes;
};

struct MetricsRow {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double kl = 0.0;
  double recon = 0.0;
};

inline constexpr const char* kMetricsHeader = "step,lr,loss,kl,recon";
std::string format_metrics_row(const MetricsRow& row);

// Bytes in [0, 255] to [-1, 1].
template <typename T>
ad::Array<T> image_from_bytes(std::span<const std::uint8_t> rgb, int size);

template <typename T>
model::Episode<T> make_episode(const scene::SceneRecord& scene, std::span<const int> context_views, int query_view);

struct EpisodeChoice {
  std::size_t scene = 0;
  std::vector<int> contexts;
  int query = 0;
  std::uint64_t noise_seed = 0;
};

// Scenes, views and noise seeds for one optimizer step. Depends only on
// (seed, step) and the dataset shape, never on the model mode.
std::vector<EpisodeChoice> sample_batch(std::uint64_t seed, long step, int batch_size, std::size_t scene_count,
                                        int views_per_scene, int contexts);
std::uint64_t batch_seed(std::uint64_t seed, long step);

class Adam {
 public:
  Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}
  // `grads[i]` belongs to `params[i]`.
  void step(model::ParamStore<float>& params, const std::vector<std::vector<double>>& grads, double lr);
  long steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
  model::ParamStore<float> params;
  std::vector<MetricsRow> metrics;
};

// Adam on the batch-mean negative ELBO. Each sample runs on its own tape and
// the per-sample gradients are summed in batch order. `initial` replaces the
// seeded initialization when given.
TrainResult train(const scene::Dataset& data, const TrainConfig& tc, const model::ModelConfig& mc,
                  std::optional<model::ParamStore<float>> initial = std::nullopt);

}  // namespace egqn::harness
