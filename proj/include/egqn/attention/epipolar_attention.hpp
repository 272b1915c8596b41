#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "egqn/ad/array.hpp"
#include "egqn/geometry/epipolar.hpp"

namespace egqn::attention {

template <typename T>
using Array = ad::Array<T>;

// Shared across contexts and decoder steps. Weights are [in, out] matrices.
template <typename T>
struct AttentionParams {
  Array<T> query_w;   // [c_dec, d_k]
  Array<T> query_b;   // [d_k]
  Array<T> key_w;     // [d', d_k]
  Array<T> key_b;     // [d_k]
  Array<T> value_w;   // [d', d_v]
  Array<T> value_b;   // [d_v]
  Array<T> output_w;  // [d_v, d']
  Array<T> output_b;  // [d']
  Array<T> lambda;    // [1]

  std::size_t decoder_channels() const { return query_w.dim(0); }
  std::size_t key_dim() const { return query_w.dim(1); }
  std::size_t feature_dim() const { return key_w.dim(0); }
  std::size_t value_dim() const { return value_w.dim(1); }
  // Throws ad::ShapeError on inconsistent dimensions.
  void validate() const;
};

// values[p0][p1][q] = r[table(p0, p1, q)][q], zeros where the table is -1.
template <typename T>
struct EpipolarRep {
  Array<T> values;                  // [h', w', w', d']
  std::vector<std::uint8_t> empty;  // [h' * w' * w'], 1 where zero-filled
};

template <typename T>
struct ContextKeys {
  Array<T> keys;                    // [h', w', w', d_k]
  Array<T> values;                  // [h', w', w', d_v]
  std::vector<std::uint8_t> empty;  // copied from the representation
};

struct AttentionOptions {
  // Exclude zero-filled positions from the softmax. Rows with no valid
  // position fall back to uniform weights over the zero keys.
  bool mask_empty = false;
};

// Keys compared per query pixel, summed over contexts, as observed during the
// last call that received this struct.
struct AttentionStats {
  std::size_t query_pixels = 0;
  std::size_t comparisons = 0;
  std::size_t comparisons_per_pixel() const { return query_pixels ? comparisons / query_pixels : 0; }
};

template <typename T>
EpipolarRep<T> build_epipolar_rep(const Array<T>& features, const geometry::EpipolarIndexTable& table);

template <typename T>
ContextKeys<T> precompute_kv(const EpipolarRep<T>& rep, const AttentionParams<T>& params);

// lambda * sum_k attend(h_prev, context k) + sum_k features_k.
template <typename T>
Array<T> attention_step(const Array<T>& h_prev, std::span<const ContextKeys<T>> contexts,
                        std::span<const Array<T>> features, const AttentionParams<T>& params,
                        const AttentionOptions& options = {}, AttentionStats* stats = nullptr);

// Same combination, but every query pixel attends to all h' * w' context
// positions.
template <typename T>
Array<T> dense_nonlocal_attention(const Array<T>& h_prev, std::span<const Array<T>> features,
                                  const AttentionParams<T>& params, AttentionStats* stats = nullptr);

enum class AttentionMode { kEpipolar, kDense };

// Comparisons per query pixel. Grids must be square.
std::size_t comparison_count(AttentionMode mode, std::size_t grid_h, std::size_t grid_w,
                             std::size_t contexts);

}  // namespace egqn::attention
