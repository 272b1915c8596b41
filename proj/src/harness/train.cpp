#include "egqn/harness/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <random>

#include "egqn/ad/tape.hpp"
#include "egqn/common/hash.hpp"
#include "egqn/model/checkpoint.hpp"

namespace egqn::harness {

double LearningRateSchedule::at(long step) const {
  if (step < 0) step = 0;
  if (step < warmup_steps) return initial + (peak - initial) * static_cast<double>(step) / warmup_steps;
  const long into_decay = step - warmup_steps;
  if (into_decay < decay_steps) return peak + (floor - peak) * static_cast<double>(into_decay) / decay_steps;
  return floor;
}

void LearningRateSchedule::validate() const {
  if (!(peak > floor && floor > 0.0)) throw std::invalid_argument("learning rates need peak > floor > 0");
  if (!(initial > 0.0)) throw std::invalid_argument("initial learning rate must be positive");
  if (warmup_steps < 0 || decay_steps <= 0) throw std::invalid_argument("warmup must be >= 0 and decay > 0");
}

void TrainConfig::validate() const {
  schedule.validate();
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (total_steps <= 0) throw std::invalid_argument("step count must be positive");
  if (schedule.warmup_steps >= total_steps) throw std::invalid_argument("warmup must be shorter than the run");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint cadence must be >= 0");
}

std::string format_metrics_row(const MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g", row.step, row.lr, row.loss, row.kl, row.recon);
  return buf;
}

template <typename T>
ad::Array<T> image_from_bytes(std::span<const std::uint8_t> rgb, int size) {
  const auto n = static_cast<std::size_t>(size) * size * 3;
  if (rgb.size() != n) throw std::invalid_argument("image byte count does not match its size");
  std::vector<T> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(rgb[i] / 127.5 - 1.0);
  return ad::Array<T>({static_cast<std::size_t>(size), static_cast<std::size_t>(size), 3}, std::move(v));
}

template <typename T>
model::Episode<T> make_episode(const scene::SceneRecord& scene, std::span<const int> context_views, int query_view) {
  const int size = scene.intrinsics.image_h;
  auto view = [&](int index) {
    if (index < 0 || index >= static_cast<int>(scene.views.size())) throw std::out_of_range("view index out of range");
    const auto& v = scene.views[static_cast<std::size_t>(index)];
    return model::Observation<T>{image_from_bytes<T>(v.rgb, size), v.pose};
  };
  model::Episode<T> ep;
  ep.intrinsics = scene.intrinsics;
  for (int c : context_views) ep.contexts.push_back(view(c));
  ep.query = view(query_view);
  return ep;
}

std::uint64_t batch_seed(std::uint64_t seed, long step) {
  return derive_seed(seed, static_cast<std::uint64_t>(step));
}

std::vector<EpisodeChoice> sample_batch(std::uint64_t seed, long step, int batch_size, std::size_t scene_count,
                                        int views_per_scene, int contexts) {
  if (scene_count == 0) throw std::invalid_argument("dataset has no scenes");
  if (contexts + 1 > views_per_scene) throw std::invalid_argument("scenes have fewer views than contexts + 1");
  const std::uint64_t root = batch_seed(seed, step);
  std::mt19937_64 rng(root);
  std::vector<EpisodeChoice> out(static_cast<std::size_t>(batch_size));
  std::vector<int> order(static_cast<std::size_t>(views_per_scene));
  for (int b = 0; b < batch_size; ++b) {
    auto& c = out[static_cast<std::size_t>(b)];
    c.scene = std::uniform_int_distribution<std::size_t>(0, scene_count - 1)(rng);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i <= contexts; ++i) {
      const int j = std::uniform_int_distribution<int>(i, views_per_scene - 1)(rng);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    c.contexts.assign(order.begin(), order.begin() + contexts);
    c.query = order[static_cast<std::size_t>(contexts)];
    c.noise_seed = derive_seed(root, static_cast<std::uint64_t>(b) + 1);
  }
  return out;
}

void Adam::step(model::ParamStore<float>& params, const std::vector<std::vector<double>>& grads, double lr) {
  if (grads.size() != params.size()) throw std::invalid_argument("gradient count does not match parameters");
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].size(), 0.0);
      v_.emplace_back(params[i].size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    if (g.size() != p.size()) throw std::invalid_argument("gradient size does not match parameter");
    std::vector<float> updated(p.data().begin(), p.data().end());
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < updated.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double step = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + epsilon_);
      updated[k] = static_cast<float>(updated[k] - step);
    }
    p = p.replaced(std::move(updated));
  }
}

namespace {

using Batch = std::vector<model::Episode<float>>;

Batch load_batch(const scene::Dataset& data, const std::vector<EpisodeChoice>& choices) {
  Batch batch;
  batch.reserve(choices.size());
  for (const auto& c : choices) batch.push_back(make_episode<float>(data.scenes[c.scene], c.contexts, c.query));
  return batch;
}

std::vector<std::size_t> scenes_of(const std::vector<EpisodeChoice>& choices) {
  std::vector<std::size_t> s;
  for (const auto& c : choices) s.push_back(c.scene);
  return s;
}

nlohmann::json train_metadata(const TrainConfig& tc, long step) {
  return {{"step", step},
          {"seed", tc.seed},
          {"batch_size", tc.batch_size},
          {"total_steps", tc.total_steps},
          {"lr_initial", tc.schedule.initial},
          {"lr_peak", tc.schedule.peak},
          {"lr_floor", tc.schedule.floor},
          {"warmup_steps", tc.schedule.warmup_steps},
          {"decay_steps", tc.schedule.decay_steps}};
}

}  // namespace

TrainResult train(const scene::Dataset& data, const TrainConfig& tc, const model::ModelConfig& mc,
                  std::optional<model::ParamStore<float>> initial) {
  tc.validate();
  mc.validate();
  if (data.info.image_size != mc.image_size) {
    throw std::invalid_argument("dataset image size " + std::to_string(data.info.image_size) +
                                " does not match the model's " + std::to_string(mc.image_size));
  }
  TrainResult result{initial ? std::move(*initial) : model::init_params<float>(mc, tc.seed), {}};
  auto& params = result.params;
  Adam adam(tc.adam_beta1, tc.adam_beta2, tc.adam_epsilon);

  std::ofstream csv;
  if (!tc.metrics_path.empty()) {
    csv.open(tc.metrics_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write metrics to " + tc.metrics_path);
    csv << kMetricsHeader << '\n';
  }

  auto choose = [&](long step) {
    return sample_batch(tc.seed, step, tc.batch_size, data.scenes.size(), data.info.views_per_scene, mc.contexts);
  };
  std::vector<EpisodeChoice> choices = choose(0);
  Batch batch = load_batch(data, choices);
  std::future<Batch> next;

  for (long step = 0; step < tc.total_steps; ++step) {
    // Batches are a pure function of the step, so prefetching cannot change
    // results; strict mode only removes the helper thread.
    std::vector<EpisodeChoice> next_choices;
    if (step + 1 < tc.total_steps) {
      next_choices = choose(step + 1);
      if (!tc.strict_deterministic) {
        next = std::async(std::launch::async, [&data, nc = next_choices] { return load_batch(data, nc); });
      }
    }

    std::vector<std::vector<double>> grads(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) grads[i].assign(params[i].size(), 0.0);
    MetricsRow row{step, tc.schedule.at(step), 0, 0, 0};
    for (std::size_t b = 0; b < batch.size(); ++b) {
      ad::Tape<float> tape;
      model::LossTerms<float> terms;
      {
        ad::TapeScope<float> scope(tape);
        terms = model::elbo_loss(params, mc, batch[b], choices[b].noise_seed);
      }
      const double loss = terms.loss.item();
      if (!std::isfinite(loss)) {
        if (next.valid()) next.wait();
        throw NumericError("non-finite loss at step " + std::to_string(step), step, batch_seed(tc.seed, step),
                           scenes_of(choices));
      }
      row.loss += loss;
      row.kl += terms.kl.item();
      row.recon += terms.reconstruction.item();
      const auto g = ad::backward(terms.loss, tape);
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto gi = g.at(params[i]);
        auto& acc = grads[i];
        const auto src = gi.data();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += src[k];
      }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    row.loss *= inv;
    row.kl *= inv;
    row.recon *= inv;
    for (auto& acc : grads) {
      for (auto& x : acc) {
        x *= inv;
        if (!std::isfinite(x)) {
          if (next.valid()) next.wait();
          throw NumericError("non-finite gradient at step " + std::to_string(step), step, batch_seed(tc.seed, step),
                             scenes_of(choices));
        }
      }
    }
    adam.step(params, grads, row.lr);
    result.metrics.push_back(row);
    if (csv.is_open()) csv << format_metrics_row(row) << '\n';

    const bool last = step + 1 == tc.total_steps;
    if (!tc.checkpoint_path.empty() && (last || (tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0))) {
      csv.flush();
      model::save_checkpoint(tc.checkpoint_path, mc, params, train_metadata(tc, step + 1));
    }
    if (!last) {
      choices = std::move(next_choices);
      batch = tc.strict_deterministic ? load_batch(data, choices) : next.get();
    }
  }
  return result;
}

template ad::Array<float> image_from_bytes(std::span<const std::uint8_t>, int);
template ad::Array<double> image_from_bytes(std::span<const std::uint8_t>, int);
template model::Episode<float> make_episode(const scene::SceneRecord&, std::span<const int>, int);
template model::Episode<double> make_episode(const scene::SceneRecord&, std::span<const int>, int);

}  // namespace egqn::harness
