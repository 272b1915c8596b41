#include "egqn/model/params.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "egqn/common/hash.hpp"

namespace egqn::model {

template <typename T>
void ParamStore<T>::add(const std::string& name, ad::Array<T> value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

template <typename T>
const ad::Array<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return values_[it->second];
}

template <typename T>
ad::Array<T>& ParamStore<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return values_[it->second];
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

namespace {

void add_conv(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t kh, std::size_t kw,
              std::size_t cin, std::size_t cout) {
  specs.push_back({prefix + ".weight", {kh, kw, cin, cout}, kh * kw * cin, kh * kw * cout});
  specs.push_back({prefix + ".bias", {cout}, 0, 0});
}

void add_dense(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t in, std::size_t out) {
  specs.push_back({prefix + ".weight", {in, out}, in, out});
  specs.push_back({prefix + ".bias", {out}, 0, 0});
}

}  // namespace

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  const auto c = static_cast<std::size_t>(cfg.decoder_channels);
  const auto cc = static_cast<std::size_t>(cfg.canvas_channels);
  const auto z = static_cast<std::size_t>(cfg.latent_channels);
  const auto qf = static_cast<std::size_t>(cfg.query_feature_channels);
  constexpr std::size_t kView = 7;
  std::vector<ParamSpec> specs;
  add_conv(specs, "tower.conv1", 2, 2, 3, d / 2);
  add_conv(specs, "tower.conv2", 2, 2, d / 2 + kView, d);
  for (const char* block : {"tower.res1", "tower.res2"}) {
    add_conv(specs, std::string(block) + ".conv_a", 3, 3, d, d);
    add_conv(specs, std::string(block) + ".conv_b", 3, 3, d, d);
  }
  add_conv(specs, "generator.lstm", 3, 3, c + d + kView + z, 4 * c);
  add_conv(specs, "generator.prior", 3, 3, c, 2 * z);
  // Transposed conv: the kernel's input-channel axis is the canvas side.
  specs.push_back({"generator.upsample.weight", {4, 4, cc, c}, 16 * c, 16 * cc});
  specs.push_back({"generator.upsample.bias", {cc}, 0, 0});
  add_conv(specs, "inference.query", 4, 4, 3, qf);
  add_conv(specs, "inference.lstm", 3, 3, c + c + d + kView + qf, 4 * c);
  add_conv(specs, "inference.posterior", 3, 3, c, 2 * z);
  add_conv(specs, "output", 1, 1, cc, 3);
  if (cfg.mode == Mode::kEgqn) {
    const auto dk = static_cast<std::size_t>(cfg.key_dim);
    const auto dv = static_cast<std::size_t>(cfg.value_dim);
    add_dense(specs, "attention.query", c, dk);
    add_dense(specs, "attention.key", d, dk);
    add_dense(specs, "attention.value", d, dv);
    add_dense(specs, "attention.output", dv, d);
    specs.push_back({"attention.lambda", {1}, 0, 0});
  }
  return specs;
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamStore<T> store;
  for (const auto& spec : param_specs(cfg)) {
    std::vector<T> values(ad::numel(spec.shape), T{0});
    if (spec.fan_in + spec.fan_out > 0) {
      std::mt19937_64 rng(splitmix64(seed ^ fnv1a(spec.name)));
      const double limit = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : values) v = static_cast<T>(u(rng));
    }
    store.add(spec.name, ad::Array<T>(spec.shape, std::move(values), true));
  }
  return store;
}

template <typename T>
attention::AttentionParams<T> attention_params(const ParamStore<T>& s) {
  attention::AttentionParams<T> p{s.at("attention.query.weight"),  s.at("attention.query.bias"),
                                  s.at("attention.key.weight"),    s.at("attention.key.bias"),
                                  s.at("attention.value.weight"),  s.at("attention.value.bias"),
                                  s.at("attention.output.weight"), s.at("attention.output.bias"),
                                  s.at("attention.lambda")};
  p.validate();
  return p;
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<float> init_params(const ModelConfig&, std::uint64_t);
template ParamStore<double> init_params(const ModelConfig&, std::uint64_t);
template attention::AttentionParams<float> attention_params(const ParamStore<float>&);
template attention::AttentionParams<double> attention_params(const ParamStore<double>&);

}  // namespace egqn::model
