#include <memory>

#include "egqn/ad/ops.hpp"
#include "kernels.hpp"

namespace egqn::ad {

template <typename T>
Array<T> matmul(const Array<T>& a, const Array<T>& b, bool transpose_b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t bk = transpose_b ? b.dim(b.rank() - 1) : b.dim(b.rank() - 2);
  const std::size_t n = transpose_b ? b.dim(b.rank() - 2) : b.dim(b.rank() - 1);
  if (bk != k) {
    throw ShapeError("matmul inner dimension mismatch: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()) + (transpose_b ? "^T" : ""));
  }

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);

  if (b.rank() == 2) {
    // One shared right operand: fold every leading index of `a` into rows.
    const std::size_t rows = a.size() / k;
    std::vector<T> out(rows * n);
    kernels::gemm(a.data().data(), false, b.data().data(), transpose_b, out.data(), rows, k, n,
                  false);
    Array<T> result(out_shape, std::move(out));
    detail::record<T>(result, {&a, &b},
                      [a, b, rows, k, n, transpose_b](std::span<const T> g,
                                                      std::span<std::vector<T>*> gin) {
                        if (auto* ga = gin[0]) {
                          // dA = G * op(B)^T
                          kernels::gemm(g.data(), false, b.data().data(), !transpose_b,
                                        ga->data(), rows, n, k, true);
                        }
                        if (auto* gb = gin[1]) {
                          if (transpose_b) {
                            // B is [n, k]: dB = G^T * A
                            kernels::gemm(g.data(), true, a.data().data(), false, gb->data(), n,
                                          rows, k, true);
                          } else {
                            // dB = A^T * G
                            kernels::gemm(a.data().data(), true, g.data(), false, gb->data(), k,
                                          rows, n, true);
                          }
                        }
                      });
    return result;
  }

  if (b.rank() != a.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw ShapeError("matmul batch dimensions disagree: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t batch = a.size() / (m * k == 0 ? 1 : m * k);
  std::vector<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm(a.data().data() + i * m * k, false, b.data().data() + i * k * n, transpose_b,
                  out.data() + i * m * n, m, k, n, false);
  }
  Array<T> result(out_shape, std::move(out));
  detail::record<T>(result, {&a, &b},
                    [a, b, batch, m, k, n, transpose_b](std::span<const T> g,
                                                        std::span<std::vector<T>*> gin) {
                      for (std::size_t i = 0; i < batch; ++i) {
                        const T* gi = g.data() + i * m * n;
                        const T* ai = a.data().data() + i * m * k;
                        const T* bi = b.data().data() + i * k * n;
                        if (auto* ga = gin[0]) {
                          kernels::gemm(gi, false, bi, !transpose_b, ga->data() + i * m * k, m, n,
                                        k, true);
                        }
                        if (auto* gb = gin[1]) {
                          T* dst = gb->data() + i * k * n;
                          if (transpose_b) {
                            kernels::gemm(gi, true, ai, false, dst, n, m, k, true);
                          } else {
                            kernels::gemm(ai, true, gi, false, dst, k, m, n, true);
                          }
                        }
                      }
                    });
  return result;
}

ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel_h,
                           std::size_t kernel_w, std::size_t stride, Padding padding) {
  if (stride < 1) throw ShapeError("conv stride must be >= 1");
  if (kernel_h < 1 || kernel_w < 1) throw ShapeError("conv kernel must be non-empty");
  ConvGeometry g{};
  g.in_h = in_h;
  g.in_w = in_w;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  if (padding == Padding::kSame) {
    if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
      throw ShapeError("`same` padding needs odd kernel sizes");
    }
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const auto total = [&](std::size_t out, std::size_t in, std::size_t kernel) {
      const std::size_t need = (out - 1) * stride + kernel;
      return need > in ? need - in : 0;
    };
    g.pad_top = total(g.out_h, in_h, kernel_h) / 2;
    g.pad_left = total(g.out_w, in_w, kernel_w) / 2;
  } else {
    if (kernel_h > in_h || kernel_w > in_w) {
      throw ShapeError("kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                       " larger than input " + std::to_string(in_h) + "x" +
                       std::to_string(in_w) + " under `valid` padding");
    }
    g.out_h = (in_h - kernel_h) / stride + 1;
    g.out_w = (in_w - kernel_w) / stride + 1;
  }
  return g;
}

template <typename T>
Array<T> conv2d(const Array<T>& x, const Array<T>& w, std::size_t stride, Padding padding) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(2) != x.dim(2)) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " with kernel " +
                     to_string(w.shape()));
  }
  const std::size_t cin = x.dim(2);
  const std::size_t cout = w.dim(3);
  const ConvGeometry g = conv_geometry(x.dim(0), x.dim(1), w.dim(0), w.dim(1), stride, padding);
  const std::size_t pixels = g.out_h * g.out_w;
  const std::size_t patch = g.kernel_h * g.kernel_w * cin;

  auto cols = std::make_shared<std::vector<T>>(pixels * patch);
  kernels::im2col(x.data().data(), cin, g, cols->data());
  std::vector<T> out(pixels * cout);
  kernels::gemm(cols->data(), false, w.data().data(), false, out.data(), pixels, patch, cout,
                false);
  Array<T> result(Shape{g.out_h, g.out_w, cout}, std::move(out));

  detail::record<T>(result, {&x, &w},
                    [cols, w, g, cin, cout, pixels, patch](std::span<const T> grad,
                                                           std::span<std::vector<T>*> gin) {
                      if (auto* gw = gin[1]) {
                        kernels::gemm(cols->data(), true, grad.data(), false, gw->data(), patch,
                                      pixels, cout, true);
                      }
                      if (auto* gx = gin[0]) {
                        std::vector<T> dcols(pixels * patch);
                        kernels::gemm(grad.data(), false, w.data().data(), true, dcols.data(),
                                      pixels, cout, patch, false);
                        kernels::col2im(dcols.data(), cin, g, gx->data());
                      }
                    });
  return result;
}

template <typename T>
Array<T> conv2d_transpose(const Array<T>& x, const Array<T>& w, std::size_t stride,
                          Padding padding, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(3) != x.dim(2)) {
    throw ShapeError("conv2d_transpose: input " + to_string(x.shape()) + " with kernel " +
                     to_string(w.shape()));
  }
  const std::size_t cin = w.dim(2);
  const std::size_t cout = w.dim(3);
  const ConvGeometry g = conv_geometry(out_h, out_w, w.dim(0), w.dim(1), stride, padding);
  if (g.out_h != x.dim(0) || g.out_w != x.dim(1)) {
    throw ShapeError("conv2d_transpose: input " + to_string(x.shape()) +
                     " does not match the geometry of a " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " output");
  }
  const std::size_t pixels = g.out_h * g.out_w;
  const std::size_t patch = g.kernel_h * g.kernel_w * cin;

  std::vector<T> cols(pixels * patch);
  kernels::gemm(x.data().data(), false, w.data().data(), true, cols.data(), pixels, cout, patch,
                false);
  std::vector<T> out(out_h * out_w * cin, T{0});
  kernels::col2im(cols.data(), cin, g, out.data());
  Array<T> result(Shape{out_h, out_w, cin}, std::move(out));

  detail::record<T>(result, {&x, &w},
                    [x, w, g, cin, cout, pixels, patch](std::span<const T> grad,
                                                        std::span<std::vector<T>*> gin) {
                      std::vector<T> dcols(pixels * patch);
                      kernels::im2col(grad.data(), cin, g, dcols.data());
                      if (auto* gx = gin[0]) {
                        kernels::gemm(dcols.data(), false, w.data().data(), false, gx->data(),
                                      pixels, patch, cout, true);
                      }
                      if (auto* gw = gin[1]) {
                        kernels::gemm(dcols.data(), true, x.data().data(), false, gw->data(),
                                      patch, pixels, cout, true);
                      }
                    });
  return result;
}

#define EGQN_INSTANTIATE(T)                                                                  \
  template Array<T> matmul(const Array<T>&, const Array<T>&, bool);                          \
  template Array<T> conv2d(const Array<T>&, const Array<T>&, std::size_t, Padding);          \
  template Array<T> conv2d_transpose(const Array<T>&, const Array<T>&, std::size_t, Padding, \
                                     std::size_t, std::size_t);

EGQN_INSTANTIATE(float)
EGQN_INSTANTIATE(double)
#undef EGQN_INSTANTIATE

}  // namespace egqn::ad
