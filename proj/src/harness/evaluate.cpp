#include "egqn/harness/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "egqn/ad/tape.hpp"
#include "egqn/common/hash.hpp"
#include "egqn/harness/train.hpp"
#include "egqn/model/network.hpp"

namespace egqn::harness {

void PixelErrors::add(std::span<const double> prediction, std::span<const std::uint8_t> target) {
  if (prediction.size() != target.size()) throw std::invalid_argument("prediction and target sizes differ");
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double e = prediction[i] - static_cast<double>(target[i]);
    abs_sum_ += std::abs(e);
    sq_sum_ += e * e;
  }
  count_ += prediction.size();
}

void PixelErrors::merge(const PixelErrors& other) {
  abs_sum_ += other.abs_sum_;
  sq_sum_ += other.sq_sum_;
  count_ += other.count_;
}

double PixelErrors::mae() const { return count_ ? abs_sum_ / static_cast<double>(count_) : 0.0; }
double PixelErrors::rmse() const { return count_ ? std::sqrt(sq_sum_ / static_cast<double>(count_)) : 0.0; }

std::vector<double> to_pixel_scale(std::span<const float> values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (static_cast<double>(values[i]) + 1.0) * 127.5;
  return out;
}

EvalReport evaluate(const model::ParamStore<float>& params, const model::ModelConfig& cfg, const scene::Dataset& data,
                    std::uint64_t seed, int queries_per_scene, std::size_t max_scenes) {
  cfg.validate();
  if (queries_per_scene <= 0) throw std::invalid_argument("queries per scene must be positive");
  if (data.info.image_size != cfg.image_size) throw std::invalid_argument("dataset image size does not match model");
  EvalReport report;
  report.mode = cfg.mode;
  report.seed = seed;
  const std::size_t scenes = max_scenes ? std::min(max_scenes, data.scenes.size()) : data.scenes.size();
  PixelErrors total;
  double elbo_sum = 0.0;
  ad::NoGradScope<float> no_grad;
  for (std::size_t s = 0; s < scenes; ++s) {
    const auto& rec = data.scenes[s];
    // Reuse the training sampler for view choice with the scene index as step.
    const auto choices = sample_batch(seed, static_cast<long>(s), queries_per_scene, 1,
                                      data.info.views_per_scene, cfg.contexts);
    for (const auto& c : choices) {
      const auto ep = make_episode<float>(rec, c.contexts, c.query);
      const auto pred = model::render(params, cfg, ep, c.noise_seed);
      const auto terms = model::elbo_loss(params, cfg, ep, derive_seed(c.noise_seed, 1));
      PixelErrors e;
      e.add(to_pixel_scale(pred.data()), rec.views[static_cast<std::size_t>(c.query)].rgb);
      total.merge(e);
      const double elbo = terms.loss.item();
      elbo_sum += elbo;
      report.queries.push_back({s, rec.seed, c.query, e.mae(), e.rmse(), elbo});
    }
  }
  report.samples = report.queries.size();
  report.mae = total.mae();
  report.rmse = total.rmse();
  report.elbo = report.samples ? elbo_sum / static_cast<double>(report.samples) : 0.0;
  return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report to " + path);
  out << "scene,scene_seed,query_view,mae,rmse,elbo,mode,eval_seed\n";
  const std::string mode = model::to_string(report.mode);
  const auto seed = static_cast<unsigned long long>(report.seed);
  char buf[240];
  for (const auto& q : report.queries) {
    std::snprintf(buf, sizeof buf, "%zu,%llu,%d,%.6f,%.6f,%.6f,%s,%llu", q.scene,
                  static_cast<unsigned long long>(q.scene_seed), q.query_view, q.mae, q.rmse, q.elbo, mode.c_str(),
                  seed);
    out << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "all,,,%.6f,%.6f,%.6f,%s,%llu", report.mae, report.rmse, report.elbo, mode.c_str(),
                seed);
  out << buf << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace egqn::harness
