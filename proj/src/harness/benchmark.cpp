#include "egqn/harness/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "egqn/ad/tape.hpp"
#include "egqn/attention/epipolar_attention.hpp"
#include "egqn/common/hash.hpp"
#include "egqn/geometry/epipolar.hpp"
#include "egqn/model/network.hpp"
#include "egqn/model/params.hpp"
#include "egqn/scene/scene.hpp"

namespace egqn::harness {

namespace {

using Clock = std::chrono::steady_clock;
using attention::AttentionMode;

ad::Array<float> random_array(ad::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<float> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<float>(u(rng));
  return ad::Array<float>(std::move(shape), std::move(v));
}

template <typename F>
double median_seconds(int repeats, F&& fn) {
  std::vector<double> t;
  for (int r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    fn();
    t.push_back(std::chrono::duration<double>(Clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace

std::size_t epipolar_rep_bytes(std::size_t grid_h, std::size_t grid_w, std::size_t feature_dim,
                               std::size_t bytes_per_scalar) {
  return grid_h * grid_w * grid_h * feature_dim * bytes_per_scalar;
}

std::vector<AttentionBenchRow> benchmark_attention(const AttentionBenchOptions& opts) {
  if (opts.contexts <= 0 || opts.repeats <= 0) throw std::invalid_argument("contexts and repeats must be positive");
  std::mt19937_64 rng(splitmix64(opts.seed));
  const auto d = static_cast<std::size_t>(opts.feature_dim);
  const auto c = static_cast<std::size_t>(opts.decoder_channels);
  const auto dk = static_cast<std::size_t>(opts.key_dim);
  const auto dv = static_cast<std::size_t>(opts.value_dim);
  attention::AttentionParams<float> params{
      random_array({c, dk}, rng, 0.2), random_array({dk}, rng, 0.1), random_array({d, dk}, rng, 0.2),
      random_array({dk}, rng, 0.1),    random_array({d, dv}, rng, 0.2), random_array({dv}, rng, 0.1),
      random_array({dv, d}, rng, 0.2), random_array({d}, rng, 0.1),    ad::Array<float>::scalar(1.0f).with_shape({1})};
  params.validate();

  const scene::SceneSpec room;
  const auto poses = scene::sample_cameras(room, opts.contexts + 1, opts.seed);
  ad::NoGradScope<float> no_grad;
  std::vector<AttentionBenchRow> rows;
  for (int grid : opts.grids) {
    if (grid <= 0) throw std::invalid_argument("grid sizes must be positive");
    const auto g = static_cast<std::size_t>(grid);
    const auto intr = geometry::Intrinsics::from_fov(grid, 60.0);
    const auto h = random_array({g, g, c}, rng);
    std::vector<ad::Array<float>> features;
    std::vector<attention::ContextKeys<float>> keys;
    for (int k = 0; k < opts.contexts; ++k) {
      features.push_back(random_array({g, g, d}, rng));
      const auto table = geometry::build_index_table(poses[0], poses[static_cast<std::size_t>(k) + 1], intr);
      keys.push_back(attention::precompute_kv(attention::build_epipolar_rep(features.back(), table), params));
    }
    attention::AttentionStats stats;
    const double epi = median_seconds(opts.repeats, [&] {
      attention::attention_step<float>(h, keys, features, params, {}, &stats);
    });
    rows.push_back({"epipolar", grid, opts.contexts, stats.comparisons_per_pixel(), epi,
                    epipolar_rep_bytes(g, g, d, sizeof(float))});
    attention::AttentionStats dense_stats;
    const double dense = median_seconds(opts.repeats, [&] {
      attention::dense_nonlocal_attention<float>(h, features, params, &dense_stats);
    });
    rows.push_back({"dense", grid, opts.contexts, dense_stats.comparisons_per_pixel(), dense, 0});
  }
  return rows;
}

std::vector<ThroughputRow> benchmark_forward(const model::ModelConfig& base, int samples, std::uint64_t seed) {
  if (samples <= 0) throw std::invalid_argument("sample count must be positive");
  model::ModelConfig gqn = base;
  gqn.mode = model::Mode::kGqn;
  model::ModelConfig egqn = base;
  egqn.mode = model::Mode::kEgqn;
  const auto p_gqn = model::init_params<float>(gqn, seed);
  const auto p_egqn = model::init_params<float>(egqn, seed);

  std::mt19937_64 rng(splitmix64(seed));
  const scene::SceneSpec room;
  const auto poses = scene::sample_cameras(room, base.contexts + 1, seed);
  model::Episode<float> ep;
  ep.intrinsics = geometry::Intrinsics::from_fov(base.image_size, 60.0);
  const auto n = static_cast<std::size_t>(base.image_size);
  for (int k = 0; k < base.contexts; ++k) ep.contexts.push_back({random_array({n, n, 3}, rng), poses[k + 1u]});
  ep.query = {random_array({n, n, 3}, rng), poses[0]};

  ad::NoGradScope<float> no_grad;
  double t_gqn = 0.0, t_egqn = 0.0;
  for (int s = 0; s < samples; ++s) {
    auto start = Clock::now();
    model::render(p_gqn, gqn, ep, derive_seed(seed, static_cast<std::uint64_t>(s)));
    t_gqn += std::chrono::duration<double>(Clock::now() - start).count();
    start = Clock::now();
    model::render(p_egqn, egqn, ep, derive_seed(seed, static_cast<std::uint64_t>(s)));
    t_egqn += std::chrono::duration<double>(Clock::now() - start).count();
  }
  return {{"gqn", base.image_size, samples, samples / t_gqn}, {"egqn", base.image_size, samples, samples / t_egqn}};
}

void write_benchmark_csv(const std::string& path, const std::vector<AttentionBenchRow>& attention,
                         const std::vector<ThroughputRow>& throughput) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write benchmark to " + path);
  out << "kind,mode,n,contexts,comparisons_per_pixel,seconds,rep_bytes,samples_per_second\n";
  char buf[200];
  for (const auto& r : attention) {
    std::snprintf(buf, sizeof buf, "attention,%s,%d,%d,%zu,%.6e,%zu,", r.mode.c_str(), r.grid, r.contexts,
                  r.comparisons_per_pixel, r.seconds, r.rep_bytes);
    out << buf << '\n';
  }
  for (const auto& r : throughput) {
    std::snprintf(buf, sizeof buf, "forward,%s,%d,,,,,%.4f", r.mode.c_str(), r.image_size, r.samples_per_second);
    out << buf << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace egqn::harness
