#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "egqn/ad/array.hpp"
#include "egqn/attention/epipolar_attention.hpp"
#include "egqn/model/config.hpp"

namespace egqn::model {

// Named learnable arrays kept in insertion order, which is also the order used
// for optimizer state, gradient reduction and checkpoints.
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, ad::Array<T> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  // Throws std::out_of_range naming the missing parameter.
  const ad::Array<T>& at(const std::string& name) const;
  ad::Array<T>& at(const std::string& name);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;

  ad::Array<T>& operator[](std::size_t i) { return values_[i]; }
  const ad::Array<T>& operator[](std::size_t i) const { return values_[i]; }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      auto v = ad::cast<U>(values_[i]);
      v.set_requires_grad(true);
      out.add(names_[i], v);
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Array<T>> values_;
  std::map<std::string, std::size_t> index_;
};

struct ParamSpec {
  std::string name;
  ad::Shape shape;
  // Glorot fan sizes; zero for biases and scalars, which start at zero.
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

// Every parameter the configuration needs, in store order. Attention
// parameters appear only in egqn mode.
std::vector<ParamSpec> param_specs(const ModelConfig& cfg);

// Glorot-uniform weights, zero biases, lambda = 0. Each array's stream depends
// only on (seed, name), so gqn and egqn stores built from the same seed share
// every common parameter bit for bit.
template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
attention::AttentionParams<T> attention_params(const ParamStore<T>& store);

}  // namespace egqn::model
