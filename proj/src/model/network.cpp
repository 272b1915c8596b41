#include "egqn/model/network.hpp"

#include <random>
#include <string>

#include "egqn/ad/ops.hpp"
#include "egqn/attention/epipolar_attention.hpp"
#include "egqn/common/hash.hpp"
#include "egqn/geometry/epipolar.hpp"

namespace egqn::model {

namespace {

using ad::Padding;

constexpr double kLogStdBound = 7.0;

template <typename T>
Array<T> conv(const ParamStore<T>& p, const std::string& prefix, const Array<T>& x, std::size_t stride,
              Padding padding) {
  return ad::add(ad::conv2d(x, p.at(prefix + ".weight"), stride, padding), p.at(prefix + ".bias"));
}

template <typename T>
Array<T> concat(std::initializer_list<Array<T>> parts) {
  std::vector<Array<T>> v(parts);
  return ad::concat_last(std::span<const Array<T>>(v));
}

template <typename T>
Array<T> viewpoint_map(const geometry::Pose& pose, std::size_t size) {
  const auto e = viewpoint_embedding(pose);
  std::vector<T> v(size * size * e.size());
  for (std::size_t i = 0; i < size * size; ++i) {
    for (std::size_t c = 0; c < e.size(); ++c) v[i * e.size() + c] = static_cast<T>(e[c]);
  }
  return Array<T>(ad::Shape{size, size, e.size()}, std::move(v));
}

template <typename T>
struct LstmOut {
  Array<T> hidden;
  Array<T> cell;
};

template <typename T>
LstmOut<T> lstm(const ParamStore<T>& p, const std::string& prefix, const Array<T>& input, const Array<T>& cell,
                std::size_t channels) {
  const Array<T> gates = conv(p, prefix, input, 1, Padding::kSame);
  const Array<T> in = ad::sigmoid(ad::slice_last(gates, 0, channels));
  const Array<T> forget = ad::sigmoid(ad::slice_last(gates, channels, 2 * channels));
  const Array<T> out = ad::sigmoid(ad::slice_last(gates, 2 * channels, 3 * channels));
  const Array<T> candidate = ad::tanh(ad::slice_last(gates, 3 * channels, 4 * channels));
  Array<T> next_cell = ad::add(ad::mul(forget, cell), ad::mul(in, candidate));
  return {ad::mul(out, ad::tanh(next_cell)), next_cell};
}

template <typename T>
struct Gaussian {
  Array<T> mean;
  Array<T> log_std;
};

template <typename T>
Gaussian<T> latent_head(const ParamStore<T>& p, const std::string& prefix, const Array<T>& hidden,
                        std::size_t latent) {
  const Array<T> out = conv(p, prefix, hidden, 1, Padding::kSame);
  return {ad::slice_last(out, 0, latent),
          ad::clamp(ad::slice_last(out, latent, 2 * latent), static_cast<T>(-kLogStdBound),
                    static_cast<T>(kLogStdBound))};
}

template <typename T>
Array<T> sample(const Gaussian<T>& g, std::uint64_t seed, int step) {
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(step)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<T> eps(g.mean.size());
  for (auto& e : eps) e = static_cast<T>(normal(rng));
  return ad::add(g.mean, ad::mul(ad::exp(g.log_std), Array<T>(g.mean.shape(), std::move(eps))));
}

void check_image(const ad::Shape& shape, const ModelConfig& cfg, const char* what) {
  const auto h = static_cast<std::size_t>(cfg.image_size);
  if (shape != ad::Shape{h, h, 3}) {
    throw ad::ShapeError(std::string(what) + " must be [" + std::to_string(h) + ", " + std::to_string(h) +
                         ", 3], got " + ad::to_string(shape));
  }
}

// Everything derived from the contexts once per episode.
template <typename T>
struct ContextBundle {
  std::vector<Array<T>> features;
  Array<T> feature_sum;
  std::vector<attention::ContextKeys<T>> keys;
  attention::AttentionParams<T> attn;
};

template <typename T>
ContextBundle<T> prepare_contexts(const ParamStore<T>& p, const ModelConfig& cfg, const Episode<T>& ep) {
  if (ep.contexts.empty()) throw ad::ContractError("episode has no context views");
  ContextBundle<T> b;
  for (const auto& c : ep.contexts) b.features.push_back(encode_context(p, cfg, c.image, c.pose));
  if (cfg.mode == Mode::kGqn) {
    b.feature_sum = ad::add_n(std::span<const Array<T>>(b.features));
    return b;
  }
  b.attn = attention_params(p);
  const auto g = cfg.grid();
  const geometry::Intrinsics grid_intr = ep.intrinsics.scaled_to(g, g);
  for (std::size_t k = 0; k < ep.contexts.size(); ++k) {
    const auto table = geometry::build_index_table(ep.query.pose, ep.contexts[k].pose, grid_intr);
    b.keys.push_back(attention::precompute_kv(attention::build_epipolar_rep(b.features[k], table), b.attn));
  }
  return b;
}

template <typename T>
Array<T> attend(const ModelConfig& cfg, const ContextBundle<T>& b, const Array<T>& hidden) {
  if (cfg.mode == Mode::kGqn) return b.feature_sum;
  attention::AttentionOptions options;
  options.mask_empty = cfg.mask_empty;
  return attention::attention_step<T>(hidden, b.keys, b.features, b.attn, options);
}

template <typename T>
Array<T> output_mean(const ParamStore<T>& p, const Array<T>& canvas) {
  return conv(p, "output", canvas, 1, Padding::kSame);
}

}  // namespace

std::array<double, 7> viewpoint_embedding(const geometry::Pose& pose) {
  const Eigen::Vector3d f = pose.forward();
  return {pose.translation.x(), pose.translation.y(), pose.translation.z(), f.x(), f.y(), f.z(), 1.0};
}

template <typename T>
Array<T> encode_context(const ParamStore<T>& p, const ModelConfig& cfg, const Array<T>& image,
                        const geometry::Pose& pose) {
  check_image(image.shape(), cfg, "context image");
  const auto half = static_cast<std::size_t>(cfg.image_size / 2);
  Array<T> y = ad::relu(conv(p, "tower.conv1", image, 2, Padding::kValid));
  y = concat<T>({y, viewpoint_map<T>(pose, half)});
  y = ad::relu(conv(p, "tower.conv2", y, 2, Padding::kValid));
  for (const char* block : {"tower.res1", "tower.res2"}) {
    const std::string b(block);
    const Array<T> inner = ad::relu(conv(p, b + ".conv_a", y, 1, Padding::kSame));
    y = ad::relu(ad::add(y, conv(p, b + ".conv_b", inner, 1, Padding::kSame)));
  }
  return y;
}

template <typename T>
DecoderState<T> initial_state(const ModelConfig& cfg) {
  const auto g = static_cast<std::size_t>(cfg.grid());
  const auto c = static_cast<std::size_t>(cfg.decoder_channels);
  const auto h = static_cast<std::size_t>(cfg.image_size);
  return {Array<T>::zeros({g, g, c}), Array<T>::zeros({g, g, c}),
          Array<T>::zeros({h, h, static_cast<std::size_t>(cfg.canvas_channels)})};
}

template <typename T>
DecoderState<T> generation_step(const ParamStore<T>& p, const ModelConfig& cfg, const DecoderState<T>& state,
                                const Array<T>& attended, const Array<T>& viewpoint, const Array<T>& latent) {
  const auto c = static_cast<std::size_t>(cfg.decoder_channels);
  const auto h = static_cast<std::size_t>(cfg.image_size);
  const auto next = lstm(p, "generator.lstm", concat<T>({state.hidden, attended, viewpoint, latent}), state.cell, c);
  const Array<T> up = ad::conv2d_transpose(next.hidden, p.at("generator.upsample.weight"), 4, Padding::kValid, h, h);
  return {next.hidden, next.cell, ad::add(state.canvas, ad::add(up, p.at("generator.upsample.bias")))};
}

template <typename T>
LossTerms<T> elbo_loss(const ParamStore<T>& p, const ModelConfig& cfg, const Episode<T>& ep, std::uint64_t seed) {
  check_image(ep.query.image.shape(), cfg, "query image");
  const auto g = static_cast<std::size_t>(cfg.grid());
  const auto c = static_cast<std::size_t>(cfg.decoder_channels);
  const auto z = static_cast<std::size_t>(cfg.latent_channels);
  const ContextBundle<T> contexts = prepare_contexts(p, cfg, ep);
  const Array<T> view = viewpoint_map<T>(ep.query.pose, g);
  const Array<T> target_features =
      ad::relu(conv(p, "inference.query", ep.query.image, 4, Padding::kValid));

  DecoderState<T> gen = initial_state<T>(cfg);
  Array<T> inf_hidden = Array<T>::zeros({g, g, c});
  Array<T> inf_cell = Array<T>::zeros({g, g, c});
  std::vector<Array<T>> kls;
  for (int step = 0; step < cfg.steps; ++step) {
    const Array<T> attended = attend(cfg, contexts, gen.hidden);
    const Gaussian<T> prior = latent_head(p, "generator.prior", gen.hidden, z);
    const auto inf = lstm(p, "inference.lstm",
                          concat<T>({inf_hidden, gen.hidden, attended, view, target_features}), inf_cell, c);
    inf_hidden = inf.hidden;
    inf_cell = inf.cell;
    const Gaussian<T> posterior = latent_head(p, "inference.posterior", inf_hidden, z);
    kls.push_back(ad::gaussian_kl(posterior.mean, posterior.log_std, prior.mean, prior.log_std));
    gen = generation_step(p, cfg, gen, attended, view, sample(posterior, seed, step));
  }
  const Array<T> mean = output_mean(p, gen.canvas);
  const T inv_dims = static_cast<T>(1.0 / static_cast<double>(cfg.output_dims()));
  const Array<T> kl = ad::add_n(std::span<const Array<T>>(kls));
  const Array<T> nll = ad::gaussian_nll(ep.query.image, mean, static_cast<T>(cfg.output_std));
  return {ad::scale(ad::add(kl, nll), inv_dims), ad::scale(kl, inv_dims), ad::scale(nll, inv_dims), mean};
}

template <typename T>
Array<T> render(const ParamStore<T>& p, const ModelConfig& cfg, const Episode<T>& ep, std::uint64_t seed) {
  const auto g = static_cast<std::size_t>(cfg.grid());
  const auto z = static_cast<std::size_t>(cfg.latent_channels);
  const ContextBundle<T> contexts = prepare_contexts(p, cfg, ep);
  const Array<T> view = viewpoint_map<T>(ep.query.pose, g);
  DecoderState<T> gen = initial_state<T>(cfg);
  for (int step = 0; step < cfg.steps; ++step) {
    const Array<T> attended = attend(cfg, contexts, gen.hidden);
    const Gaussian<T> prior = latent_head(p, "generator.prior", gen.hidden, z);
    gen = generation_step(p, cfg, gen, attended, view, sample(prior, seed, step));
  }
  return ad::clamp(output_mean(p, gen.canvas), T{-1}, T{1});
}

#define EGQN_INSTANTIATE(T)                                                                                  \
  template Array<T> encode_context(const ParamStore<T>&, const ModelConfig&, const Array<T>&,                \
                                   const geometry::Pose&);                                                   \
  template DecoderState<T> initial_state(const ModelConfig&);                                                \
  template DecoderState<T> generation_step(const ParamStore<T>&, const ModelConfig&, const DecoderState<T>&, \
                                           const Array<T>&, const Array<T>&, const Array<T>&);               \
  template LossTerms<T> elbo_loss(const ParamStore<T>&, const ModelConfig&, const Episode<T>&, std::uint64_t); \
  template Array<T> render(const ParamStore<T>&, const ModelConfig&, const Episode<T>&, std::uint64_t);

EGQN_INSTANTIATE(float)
EGQN_INSTANTIATE(double)
#undef EGQN_INSTANTIATE

}  // namespace egqn::model
