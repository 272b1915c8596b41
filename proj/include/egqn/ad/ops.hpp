#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "egqn/ad/array.hpp"
#include "egqn/ad/tape.hpp"

namespace egqn::ad {

// Binary ops accept equal shapes, or one operand whose shape is a suffix of
// the other's (bias over channels, a row over a grid) or which holds a single
// element (a scalar weight). Nothing else broadcasts.
template <typename T> Array<T> add(const Array<T>& a, const Array<T>& b);
template <typename T> Array<T> sub(const Array<T>& a, const Array<T>& b);
template <typename T> Array<T> mul(const Array<T>& a, const Array<T>& b);

template <typename T> Array<T> scale(const Array<T>& a, T factor);
template <typename T> Array<T> sigmoid(const Array<T>& a);
template <typename T> Array<T> tanh(const Array<T>& a);
// Subgradient at zero is zero.
template <typename T> Array<T> relu(const Array<T>& a);
template <typename T> Array<T> exp(const Array<T>& a);
// Gradient passes only strictly inside (lo, hi).
template <typename T> Array<T> clamp(const Array<T>& a, T lo, T hi);

enum class UnaryOp { kSigmoid, kTanh, kRelu, kExp };
enum class BinaryOp { kAdd, kSub, kMul };

template <typename T> Array<T> elementwise(UnaryOp op, const Array<T>& a);
template <typename T> Array<T> elementwise(BinaryOp op, const Array<T>& a, const Array<T>& b);

// Sum of all elements in fixed sequential order; result has shape {1}.
template <typename T> Array<T> sum(const Array<T>& a);
// Sum in order a[0] + a[1] + ...; all shapes equal.
template <typename T> Array<T> add_n(std::span<const Array<T>> terms);

template <typename T> Array<T> reshape(const Array<T>& a, Shape shape);
template <typename T> Array<T> concat_last(std::span<const Array<T>> parts);
// Channels [begin, end) of the last axis.
template <typename T> Array<T> slice_last(const Array<T>& a, std::size_t begin, std::size_t end);

// a: [..., m, k]. b: [k, n] shared across every leading index of `a`, or
// [..., k, n] with the same leading dims. With transpose_b, b's trailing two
// axes are read as [n, k].
template <typename T>
Array<T> matmul(const Array<T>& a, const Array<T>& b, bool transpose_b = false);

enum class Padding { kSame, kValid };

struct ConvGeometry {
  std::size_t in_h, in_w, out_h, out_w;
  std::size_t kernel_h, kernel_w, stride;
  std::size_t pad_top, pad_left;
};

// Output size for `same` is ceil(in/stride) with the padding split as
// floor(total/2) before and the remainder after.
ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel_h,
                           std::size_t kernel_w, std::size_t stride, Padding padding);

// x: [H, W, Cin], w: [kh, kw, Cin, Cout] -> [Ho, Wo, Cout].
template <typename T>
Array<T> conv2d(const Array<T>& x, const Array<T>& w, std::size_t stride, Padding padding);

// Adjoint of conv2d for the same geometry: x: [Ho, Wo, Cout],
// w: [kh, kw, Cin, Cout] -> [out_h, out_w, Cin], where conv2d of an
// [out_h, out_w, Cin] input with `w` yields [Ho, Wo, Cout].
template <typename T>
Array<T> conv2d_transpose(const Array<T>& x, const Array<T>& w, std::size_t stride,
                          Padding padding, std::size_t out_h, std::size_t out_w);

template <typename T> Array<T> softmax_last(const Array<T>& x);

// out[i] = src[rows[i], cols[i], :], or zeros when rows[i] == -1.
template <typename T>
Array<T> gather_cells(const Array<T>& src, std::span<const std::int32_t> rows,
                      std::span<const std::int32_t> cols);

// out[i] = src[indices[i], col, :], or zeros when indices[i] == -1.
template <typename T>
Array<T> gather_rows(const Array<T>& src, std::span<const std::int32_t> indices, std::int32_t col);

// Sum over elements of KL(N(mu_q, e^ls_q) || N(mu_p, e^ls_p)); shape {1}.
template <typename T>
Array<T> gaussian_kl(const Array<T>& mu_q, const Array<T>& log_std_q, const Array<T>& mu_p,
                     const Array<T>& log_std_p);

// Sum over elements of -log N(target; mean, std^2) with a fixed std; shape {1}.
// Gradient flows to `mean` only.
template <typename T>
Array<T> gaussian_nll(const Array<T>& target, const Array<T>& mean, T std_dev);

}  // namespace egqn::ad
