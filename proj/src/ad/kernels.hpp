#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <vector>

#include "egqn/ad/ops.hpp"

namespace egqn::ad::kernels {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

// Plain loops for thin or small products. Eigen routes those through
// gemv/coefficient kernels whose peeling depends on pointer alignment, which
// would make results vary between otherwise identical calls.
template <typename T>
void small_gemm(const T* a, bool trans_a, const T* b, bool trans_b, T* c, std::size_t m,
                std::size_t k, std::size_t n, bool accumulate) {
  const auto a_at = [&](std::size_t i, std::size_t p) { return trans_a ? a[p * m + i] : a[i * k + p]; };
  if (!trans_b) {
    std::vector<T> row(n);
    for (std::size_t i = 0; i < m; ++i) {
      std::fill(row.begin(), row.end(), T{0});
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a_at(i, p);
        const T* br = b + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += av * br[j];
      }
      T* cr = c + i * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] = accumulate ? cr[j] + row[j] : row[j];
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += a_at(i, p) * bj[p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

// c (+)= op(a) * op(b), all row-major and densely packed. op(a) is m x k and
// op(b) is k x n. Eigen's packed GEMM copies operands into fixed-size blocks,
// so repeated calls reduce in the same order regardless of buffer address.
template <typename T>
void gemm(const T* a, bool trans_a, const T* b, bool trans_b, T* c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  MutMap<T> cm(c, mi, ni);
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) cm.setZero();
    return;
  }
  if (m < 8 || n < 8 || k < 8) {
    small_gemm(a, trans_a, b, trans_b, c, m, k, n, accumulate);
    return;
  }
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      cm.noalias() += lhs * rhs;
    } else {
      cm.noalias() = lhs * rhs;
    }
  };
  if (!trans_a && !trans_b) {
    run(ConstMap<T>(a, mi, ki), ConstMap<T>(b, ki, ni));
  } else if (!trans_a && trans_b) {
    run(ConstMap<T>(a, mi, ki), ConstMap<T>(b, ni, ki).transpose());
  } else if (trans_a && !trans_b) {
    run(ConstMap<T>(a, ki, mi).transpose(), ConstMap<T>(b, ki, ni));
  } else {
    run(ConstMap<T>(a, ki, mi).transpose(), ConstMap<T>(b, ni, ki).transpose());
  }
}

// Patch matrix [out_h*out_w, kh*kw*c], zero outside the image.
template <typename T>
void im2col(const T* x, std::size_t channels, const ConvGeometry& g, T* cols) {
  const std::size_t row_len = g.kernel_h * g.kernel_w * channels;
  for (std::size_t oh = 0; oh < g.out_h; ++oh) {
    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
      T* row = cols + (oh * g.out_w + ow) * row_len;
      for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                        static_cast<std::ptrdiff_t>(g.pad_top);
        for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
          const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                          static_cast<std::ptrdiff_t>(g.pad_left);
          T* dst = row + (ki * g.kernel_w + kj) * channels;
          if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h) ||
              iw >= static_cast<std::ptrdiff_t>(g.in_w)) {
            std::fill(dst, dst + channels, T{0});
          } else {
            const T* src = x + (static_cast<std::size_t>(ih) * g.in_w +
                                static_cast<std::size_t>(iw)) * channels;
            std::copy(src, src + channels, dst);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch rows back onto the image (accumulating).
template <typename T>
void col2im(const T* cols, std::size_t channels, const ConvGeometry& g, T* x) {
  const std::size_t row_len = g.kernel_h * g.kernel_w * channels;
  for (std::size_t oh = 0; oh < g.out_h; ++oh) {
    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
      const T* row = cols + (oh * g.out_w + ow) * row_len;
      for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                        static_cast<std::ptrdiff_t>(g.pad_top);
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
          const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                          static_cast<std::ptrdiff_t>(g.pad_left);
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          const T* src = row + (ki * g.kernel_w + kj) * channels;
          T* dst = x + (static_cast<std::size_t>(ih) * g.in_w + static_cast<std::size_t>(iw)) *
                           channels;
          for (std::size_t c = 0; c < channels; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace egqn::ad::kernels
