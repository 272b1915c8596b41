#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "egqn/ad/array.hpp"
#include "egqn/geometry/camera.hpp"
#include "egqn/model/config.hpp"
#include "egqn/model/params.hpp"

namespace egqn::model {

template <typename T>
using Array = ad::Array<T>;

// An image in [-1, 1], [h, w, 3], with the pose it was taken from.
template <typename T>
struct Observation {
  Array<T> image;
  geometry::Pose pose;
};

// Contexts plus the target view. Intrinsics describe the full-resolution
// image; all views share them.
template <typename T>
struct Episode {
  std::vector<Observation<T>> contexts;
  Observation<T> query;
  geometry::Intrinsics intrinsics;
};

// Camera position, forward axis, and a constant 1.
std::array<double, 7> viewpoint_embedding(const geometry::Pose& pose);

template <typename T>
Array<T> encode_context(const ParamStore<T>& params, const ModelConfig& cfg, const Array<T>& image,
                        const geometry::Pose& pose);

template <typename T>
struct DecoderState {
  Array<T> hidden;  // [h', w', c_dec]
  Array<T> cell;    // [h', w', c_dec]
  Array<T> canvas;  // [h, w, c_canvas]
};

template <typename T>
DecoderState<T> initial_state(const ModelConfig& cfg);

// One generator step: conv-LSTM over [hidden, attended, viewpoint, latent],
// then the canvas gains the 4x upsampled new hidden state.
template <typename T>
DecoderState<T> generation_step(const ParamStore<T>& params, const ModelConfig& cfg,
                                const DecoderState<T>& state, const Array<T>& attended,
                                const Array<T>& viewpoint_map, const Array<T>& latent);

template <typename T>
struct LossTerms {
  Array<T> loss;            // (KL + NLL) / dims, shape {1}
  Array<T> kl;              // KL / dims
  Array<T> reconstruction;  // NLL / dims
  Array<T> mean;            // output mean, [h, w, 3]
};

// Negative ELBO per output dimension, with reparameterized posterior samples
// drawn from `seed`.
template <typename T>
LossTerms<T> elbo_loss(const ParamStore<T>& params, const ModelConfig& cfg, const Episode<T>& episode,
                       std::uint64_t seed);

// Prior samples for every step; returns the output mean clipped to [-1, 1].
template <typename T>
Array<T> render(const ParamStore<T>& params, const ModelConfig& cfg, const Episode<T>& episode,
                std::uint64_t seed);

}  // namespace egqn::model
