#include "egqn/attention/epipolar_attention.hpp"

#include <cmath>
#include <string>

#include "egqn/ad/ops.hpp"

namespace egqn::attention {

namespace {

void expect_shape(const ad::Shape& actual, const ad::Shape& wanted, const char* what) {
  if (actual != wanted) {
    throw ad::ShapeError(std::string(what) + ": expected " + ad::to_string(wanted) + ", got " +
                         ad::to_string(actual));
  }
}

template <typename T>
Array<T> project(const Array<T>& x, const Array<T>& w, const Array<T>& b) {
  return ad::add(ad::matmul(x, w), b);
}

template <typename T>
Array<T> combine(const Array<T>& lambda, std::span<const Array<T>> attended,
                 std::span<const Array<T>> features) {
  const Array<T> skip = ad::add_n(features);
  const Array<T> total = ad::add_n(attended);
  return ad::add(skip, ad::mul(lambda, total));
}

}  // namespace

template <typename T>
void AttentionParams<T>::validate() const {
  if (query_w.rank() != 2 || key_w.rank() != 2 || value_w.rank() != 2 || output_w.rank() != 2) {
    throw ad::ShapeError("attention projections must be rank-2 matrices");
  }
  const std::size_t dk = key_dim();
  const std::size_t dv = value_dim();
  const std::size_t d = feature_dim();
  expect_shape(query_b.shape(), {dk}, "query bias");
  expect_shape(key_w.shape(), {d, dk}, "key weights");
  expect_shape(key_b.shape(), {dk}, "key bias");
  expect_shape(value_b.shape(), {dv}, "value bias");
  expect_shape(output_w.shape(), {dv, d}, "output weights");
  expect_shape(output_b.shape(), {d}, "output bias");
  expect_shape(lambda.shape(), {1}, "lambda");
}

template <typename T>
EpipolarRep<T> build_epipolar_rep(const Array<T>& features, const geometry::EpipolarIndexTable& table) {
  if (features.rank() != 3) throw ad::ShapeError("features must be [h', w', d'], got " + ad::to_string(features.shape()));
  const std::size_t gh = features.dim(0);
  const std::size_t gw = features.dim(1);
  const std::size_t d = features.dim(2);
  if (static_cast<std::size_t>(table.grid_h()) != gh || static_cast<std::size_t>(table.grid_w()) != gw) {
    throw ad::ShapeError("index table grid " + std::to_string(table.grid_h()) + "x" +
                         std::to_string(table.grid_w()) + " does not match features " +
                         ad::to_string(features.shape()));
  }
  const auto rows = table.entries();
  std::vector<std::int32_t> cols(rows.size());
  std::vector<std::uint8_t> empty(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cols[i] = static_cast<std::int32_t>(i % gw);
    empty[i] = rows[i] == geometry::EpipolarIndexTable::kSentinel;
  }
  auto gathered = ad::gather_cells(features, rows, std::span<const std::int32_t>(cols));
  return {ad::reshape(gathered, {gh, gw, gw, d}), std::move(empty)};
}

template <typename T>
ContextKeys<T> precompute_kv(const EpipolarRep<T>& rep, const AttentionParams<T>& params) {
  if (rep.values.rank() != 4 || rep.values.dim(3) != params.feature_dim()) {
    throw ad::ShapeError("epipolar representation " + ad::to_string(rep.values.shape()) +
                         " does not match feature dim " + std::to_string(params.feature_dim()));
  }
  return {project(rep.values, params.key_w, params.key_b),
          project(rep.values, params.value_w, params.value_b), rep.empty};
}

template <typename T>
Array<T> attention_step(const Array<T>& h_prev, std::span<const ContextKeys<T>> contexts,
                        std::span<const Array<T>> features, const AttentionParams<T>& params,
                        const AttentionOptions& options, AttentionStats* stats) {
  if (contexts.empty()) throw ad::ContractError("attention needs at least one context");
  if (contexts.size() != features.size()) throw ad::ContractError("context keys and features differ in count");
  if (h_prev.rank() != 3) throw ad::ShapeError("decoder state must be [h', w', c], got " + ad::to_string(h_prev.shape()));
  const std::size_t gh = h_prev.dim(0);
  const std::size_t gw = h_prev.dim(1);
  const std::size_t pixels = gh * gw;
  const std::size_t dk = params.key_dim();
  const std::size_t dv = params.value_dim();
  for (const auto& c : contexts) {
    expect_shape(c.keys.shape(), {gh, gw, gw, dk}, "context keys");
    expect_shape(c.values.shape(), {gh, gw, gw, dv}, "context values");
  }

  const Array<T> query = ad::reshape(project(h_prev, params.query_w, params.query_b), {pixels, 1, dk});
  const T inv_sqrt_dk = T{1} / static_cast<T>(std::sqrt(static_cast<double>(dk)));
  std::vector<Array<T>> attended;
  attended.reserve(contexts.size());
  std::size_t comparisons = 0;
  for (const auto& c : contexts) {
    const Array<T> keys = ad::reshape(c.keys, {pixels, gw, dk});
    const Array<T> values = ad::reshape(c.values, {pixels, gw, dv});
    Array<T> scores = ad::scale(ad::matmul(query, keys, true), inv_sqrt_dk);
    comparisons += scores.size();
    if (options.mask_empty) {
      std::vector<T> penalty(c.empty.size());
      for (std::size_t i = 0; i < penalty.size(); ++i) penalty[i] = c.empty[i] ? T{-1e30} : T{0};
      scores = ad::add(scores, Array<T>(scores.shape(), std::move(penalty)));
    }
    const Array<T> weights = ad::softmax_last(scores);
    const Array<T> mixed = ad::reshape(ad::matmul(weights, values), {gh, gw, dv});
    attended.push_back(project(mixed, params.output_w, params.output_b));
  }
  if (stats) {
    stats->query_pixels = pixels;
    stats->comparisons = comparisons;
  }
  return combine<T>(params.lambda, attended, features);
}

template <typename T>
Array<T> dense_nonlocal_attention(const Array<T>& h_prev, std::span<const Array<T>> features,
                                  const AttentionParams<T>& params, AttentionStats* stats) {
  if (features.empty()) throw ad::ContractError("attention needs at least one context");
  if (h_prev.rank() != 3) throw ad::ShapeError("decoder state must be [h', w', c], got " + ad::to_string(h_prev.shape()));
  const std::size_t gh = h_prev.dim(0);
  const std::size_t gw = h_prev.dim(1);
  const std::size_t pixels = gh * gw;
  const std::size_t dk = params.key_dim();
  const std::size_t dv = params.value_dim();
  const Array<T> query = ad::reshape(project(h_prev, params.query_w, params.query_b), {pixels, dk});
  const T inv_sqrt_dk = T{1} / static_cast<T>(std::sqrt(static_cast<double>(dk)));
  std::vector<Array<T>> attended;
  std::size_t comparisons = 0;
  for (const auto& r : features) {
    if (r.rank() != 3) throw ad::ShapeError("features must be [h', w', d'], got " + ad::to_string(r.shape()));
    const std::size_t positions = r.dim(0) * r.dim(1);
    const Array<T> flat = ad::reshape(r, {positions, r.dim(2)});
    const Array<T> keys = project(flat, params.key_w, params.key_b);
    const Array<T> values = project(flat, params.value_w, params.value_b);
    const Array<T> scores = ad::scale(ad::matmul(query, keys, true), inv_sqrt_dk);
    comparisons += scores.size();
    const Array<T> mixed = ad::reshape(ad::matmul(ad::softmax_last(scores), values), {gh, gw, dv});
    attended.push_back(project(mixed, params.output_w, params.output_b));
  }
  if (stats) {
    stats->query_pixels = pixels;
    stats->comparisons = comparisons;
  }
  return combine<T>(params.lambda, attended, features);
}

std::size_t comparison_count(AttentionMode mode, std::size_t grid_h, std::size_t grid_w,
                             std::size_t contexts) {
  if (grid_h != grid_w) throw ad::ContractError("comparison counts are defined for square grids");
  return mode == AttentionMode::kEpipolar ? grid_h * contexts : grid_h * grid_w * contexts;
}

#define EGQN_INSTANTIATE(T)                                                                         \
  template struct AttentionParams<T>;                                                               \
  template EpipolarRep<T> build_epipolar_rep(const Array<T>&, const geometry::EpipolarIndexTable&); \
  template ContextKeys<T> precompute_kv(const EpipolarRep<T>&, const AttentionParams<T>&);          \
  template Array<T> attention_step(const Array<T>&, std::span<const ContextKeys<T>>,                \
                                   std::span<const Array<T>>, const AttentionParams<T>&,            \
                                   const AttentionOptions&, AttentionStats*);                       \
  template Array<T> dense_nonlocal_attention(const Array<T>&, std::span<const Array<T>>,            \
                                             const AttentionParams<T>&, AttentionStats*);

EGQN_INSTANTIATE(float)
EGQN_INSTANTIATE(double)
#undef EGQN_INSTANTIATE

}  // namespace egqn::attention
