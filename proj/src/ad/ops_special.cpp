#include <algorithm>
#include <cmath>
#include <numbers>

#include "egqn/ad/ops.hpp"

namespace egqn::ad {

template <typename T>
Array<T> softmax_last(const Array<T>& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw ShapeError("softmax over an empty final axis: " + to_string(x.shape()));
  }
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.size() / width;
  const auto v = x.data();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = v.data() + r * width;
    T* o = out.data() + r * width;
    const T peak = *std::max_element(in, in + width);
    T total{0};
    for (std::size_t i = 0; i < width; ++i) {
      o[i] = std::exp(in[i] - peak);
      total += o[i];
    }
    const T inv = T{1} / total;
    for (std::size_t i = 0; i < width; ++i) o[i] *= inv;
  }
  Array<T> result(x.shape(), std::move(out));
  const Array<T> y = result.detach();
  detail::record<T>(result, {&x}, [y, rows, width](std::span<const T> g, std::span<std::vector<T>*> gin) {
    auto& gx = *gin[0];
    const auto yv = y.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = yv.data() + r * width;
      const T* gr = g.data() + r * width;
      T dot{0};
      for (std::size_t i = 0; i < width; ++i) dot += gr[i] * yr[i];
      for (std::size_t i = 0; i < width; ++i) gx[r * width + i] += yr[i] * (gr[i] - dot);
    }
  });
  return result;
}

template <typename T>
Array<T> gather_cells(const Array<T>& src, std::span<const std::int32_t> rows,
                      std::span<const std::int32_t> cols) {
  if (src.rank() != 3) throw ShapeError("gather_cells expects [H, W, D], got " + to_string(src.shape()));
  if (rows.size() != cols.size()) throw ShapeError("gather_cells: rows/cols length mismatch");
  const auto h = static_cast<std::int32_t>(src.dim(0));
  const auto w = static_cast<std::int32_t>(src.dim(1));
  const std::size_t d = src.dim(2);
  const std::size_t n = rows.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i] < -1 || rows[i] >= h) {
      throw IndexError("gather row index " + std::to_string(rows[i]) + " outside [-1, " +
                       std::to_string(h) + ")");
    }
    if (cols[i] < 0 || cols[i] >= w) {
      throw IndexError("gather column index " + std::to_string(cols[i]) + " outside [0, " +
                       std::to_string(w) + ")");
    }
  }
  // Flat source offset per output row; -1 marks a zero row.
  std::vector<std::ptrdiff_t> offsets(n);
  for (std::size_t i = 0; i < n; ++i) {
    offsets[i] = rows[i] < 0 ? -1
                             : (static_cast<std::ptrdiff_t>(rows[i]) * w + cols[i]) *
                                   static_cast<std::ptrdiff_t>(d);
  }
  const auto v = src.data();
  std::vector<T> out(n * d, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    if (offsets[i] < 0) continue;
    std::copy_n(v.data() + offsets[i], d, out.data() + i * d);
  }
  Array<T> result(Shape{n, d}, std::move(out));
  detail::record<T>(result, {&src}, [offsets = std::move(offsets), d](std::span<const T> g,
                                                                      std::span<std::vector<T>*> gin) {
    auto& gs = *gin[0];
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (offsets[i] < 0) continue;
      T* dst = gs.data() + offsets[i];
      const T* from = g.data() + i * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += from[c];
    }
  });
  return result;
}

template <typename T>
Array<T> gather_rows(const Array<T>& src, std::span<const std::int32_t> indices, std::int32_t col) {
  std::vector<std::int32_t> cols(indices.size(), col);
  if (src.rank() == 3 && (col < 0 || col >= static_cast<std::int32_t>(src.dim(1)))) {
    throw IndexError("gather column " + std::to_string(col) + " outside [0, " +
                     std::to_string(src.dim(1)) + ")");
  }
  return gather_cells(src, indices, std::span<const std::int32_t>(cols));
}

template <typename T>
Array<T> gaussian_kl(const Array<T>& mu_q, const Array<T>& log_std_q, const Array<T>& mu_p,
                     const Array<T>& log_std_p) {
  const Shape& shape = mu_q.shape();
  if (log_std_q.shape() != shape || mu_p.shape() != shape || log_std_p.shape() != shape) {
    throw ShapeError("gaussian_kl operands must share a shape");
  }
  const auto mq = mu_q.data();
  const auto lq = log_std_q.data();
  const auto mp = mu_p.data();
  const auto lp = log_std_p.data();
  double total = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    const double delta = static_cast<double>(lq[i]) - static_cast<double>(lp[i]);
    const double diff = static_cast<double>(mq[i]) - static_cast<double>(mp[i]);
    // log(sp/sq) + (sq^2 + diff^2) / (2 sp^2) - 1/2, arranged so the variance
    // part stays non-negative under rounding.
    const double var_term = std::max(0.0, 0.5 * (std::expm1(2.0 * delta) - 2.0 * delta));
    total += var_term + 0.5 * diff * diff * std::exp(-2.0 * static_cast<double>(lp[i]));
  }
  Array<T> result(Shape{1}, std::vector<T>{static_cast<T>(total)});
  detail::record<T>(result, {&mu_q, &log_std_q, &mu_p, &log_std_p},
                    [mu_q, log_std_q, mu_p, log_std_p](std::span<const T> g,
                                                       std::span<std::vector<T>*> gin) {
                      const auto mq = mu_q.data();
                      const auto lq = log_std_q.data();
                      const auto mp = mu_p.data();
                      const auto lp = log_std_p.data();
                      const T seed = g[0];
                      for (std::size_t i = 0; i < mq.size(); ++i) {
                        const T diff = mq[i] - mp[i];
                        const T inv_var_p = std::exp(T{-2} * lp[i]);
                        const T ratio = std::expm1(T{2} * (lq[i] - lp[i]));
                        if (gin[0]) (*gin[0])[i] += seed * diff * inv_var_p;
                        if (gin[1]) (*gin[1])[i] += seed * ratio;
                        if (gin[2]) (*gin[2])[i] -= seed * diff * inv_var_p;
                        if (gin[3]) (*gin[3])[i] += seed * (-ratio - diff * diff * inv_var_p);
                      }
                    });
  return result;
}

template <typename T>
Array<T> gaussian_nll(const Array<T>& target, const Array<T>& mean, T std_dev) {
  if (target.shape() != mean.shape()) {
    throw ShapeError("gaussian_nll: target " + to_string(target.shape()) + " vs mean " +
                     to_string(mean.shape()));
  }
  if (!(std_dev > T{0})) throw ContractError("gaussian_nll needs a positive std");
  const auto x = target.data();
  const auto m = mean.data();
  const double sd = static_cast<double>(std_dev);
  const double log_norm = std::log(sd) + 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (static_cast<double>(x[i]) - static_cast<double>(m[i])) / sd;
    total += 0.5 * z * z + log_norm;
  }
  Array<T> result(Shape{1}, std::vector<T>{static_cast<T>(total)});
  detail::record<T>(result, {&mean}, [target, mean, std_dev](std::span<const T> g,
                                                             std::span<std::vector<T>*> gin) {
    auto& gm = *gin[0];
    const auto x = target.data();
    const auto m = mean.data();
    const T inv_var = T{1} / (std_dev * std_dev);
    for (std::size_t i = 0; i < x.size(); ++i) gm[i] += g[0] * (m[i] - x[i]) * inv_var;
  });
  return result;
}

#define EGQN_INSTANTIATE(T)                                                                   \
  template Array<T> softmax_last(const Array<T>&);                                            \
  template Array<T> gather_cells(const Array<T>&, std::span<const std::int32_t>,              \
                                 std::span<const std::int32_t>);                              \
  template Array<T> gather_rows(const Array<T>&, std::span<const std::int32_t>, std::int32_t); \
  template Array<T> gaussian_kl(const Array<T>&, const Array<T>&, const Array<T>&,            \
                                const Array<T>&);                                             \
  template Array<T> gaussian_nll(const Array<T>&, const Array<T>&, T);

EGQN_INSTANTIATE(float)
EGQN_INSTANTIATE(double)
#undef EGQN_INSTANTIATE

}  // namespace egqn::ad
