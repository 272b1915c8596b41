#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egqn/model/config.hpp"
#include "egqn/model/params.hpp"
#include "egqn/scene/dataset.hpp"

namespace egqn::harness {

// Running absolute and squared pixel errors on the 0-255 scale.
class PixelErrors {
 public:
  void add(std::span<const double> prediction, std::span<const std::uint8_t> target);
  void merge(const PixelErrors& other);
  double mae() const;
  double rmse() const;
  std::size_t count() const { return count_; }

 private:
  double abs_sum_ = 0.0;
  double sq_sum_ = 0.0;
  std::size_t count_ = 0;
};

// [-1, 1] model output to the continuous 0-255 scale.
std::vector<double> to_pixel_scale(std::span<const float> values);

struct QueryEval {
  std::size_t scene = 0;
  std::uint64_t scene_seed = 0;
  int query_view = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double elbo = 0.0;  // negative ELBO, nats per dimension
};

struct EvalReport {
  std::vector<QueryEval> queries;
  double mae = 0.0;   // over every pixel of every query
  double rmse = 0.0;
  double elbo = 0.0;  // mean over queries
  std::size_t samples = 0;
  model::Mode mode = model::Mode::kEgqn;
  std::uint64_t seed = 0;
};

// Predictions are the output mean under prior samples. Each scene contributes
// `queries_per_scene` episodes with views chosen from `seed`; `max_scenes`
// of 0 means all scenes.
EvalReport evaluate(const model::ParamStore<float>& params, const model::ModelConfig& cfg, const scene::Dataset& data,
                    std::uint64_t seed, int queries_per_scene = 1, std::size_t max_scenes = 0);

// One row per query followed by an "all" row with the aggregate.
void write_report_csv(const std::string& path, const EvalReport& report);

}  // namespace egqn::harness
