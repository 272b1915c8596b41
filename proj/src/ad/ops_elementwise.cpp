#include <algorithm>
#include <cmath>

#include "egqn/ad/ops.hpp"

namespace egqn::ad {

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

// Which operand (if any) is repeated to match the other.
enum class Broadcast { kNone, kRight, kLeft };

Broadcast resolve(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kNone;
  if (numel(b) == 1 || is_suffix(b, a)) return Broadcast::kRight;
  if (numel(a) == 1 || is_suffix(a, b)) return Broadcast::kLeft;
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                   to_string(b));
}

const char* name_of(BinaryOp op) {
  switch (op) {
    case BinaryOp::kAdd: return "add";
    case BinaryOp::kSub: return "sub";
    case BinaryOp::kMul: return "mul";
  }
  return "?";
}

template <typename T>
T apply(BinaryOp op, T x, T y) {
  switch (op) {
    case BinaryOp::kAdd: return x + y;
    case BinaryOp::kSub: return x - y;
    case BinaryOp::kMul: return x * y;
  }
  return T{0};
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
Array<T> elementwise(BinaryOp op, const Array<T>& a, const Array<T>& b) {
  const Broadcast mode = resolve(a.shape(), b.shape(), name_of(op));
  const Shape out_shape = mode == Broadcast::kLeft ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const auto da = a.data();
  const auto db = b.data();

  // Element i of the output reads a[i % na] and b[i % nb]; walking in blocks
  // of the smaller operand avoids the modulo.
  const std::size_t inner = std::min(na, nb);
  const std::size_t blocks = inner == 0 ? 0 : n / inner;
  std::vector<T> out(n);
  for (std::size_t r = 0; r < blocks; ++r) {
    const std::size_t base = r * inner;
    const std::size_t ia = na == n ? base : 0;
    const std::size_t ib = nb == n ? base : 0;
    for (std::size_t j = 0; j < inner; ++j) out[base + j] = apply(op, da[ia + j], db[ib + j]);
  }
  Array<T> result(out_shape, std::move(out));

  detail::record<T>(result, {&a, &b}, [op, a, b, n, na, nb, inner, blocks](
                                          std::span<const T> g, std::span<std::vector<T>*> gin) {
    const auto va = a.data();
    const auto vb = b.data();
    for (std::size_t r = 0; r < blocks; ++r) {
      const std::size_t base = r * inner;
      const std::size_t ia = na == n ? base : 0;
      const std::size_t ib = nb == n ? base : 0;
      if (auto* ga = gin[0]) {
        T* dst = ga->data() + ia;
        if (op == BinaryOp::kMul) {
          for (std::size_t j = 0; j < inner; ++j) dst[j] += g[base + j] * vb[ib + j];
        } else {
          for (std::size_t j = 0; j < inner; ++j) dst[j] += g[base + j];
        }
      }
      if (auto* gb = gin[1]) {
        T* dst = gb->data() + ib;
        if (op == BinaryOp::kMul) {
          for (std::size_t j = 0; j < inner; ++j) dst[j] += g[base + j] * va[ia + j];
        } else if (op == BinaryOp::kSub) {
          for (std::size_t j = 0; j < inner; ++j) dst[j] -= g[base + j];
        } else {
          for (std::size_t j = 0; j < inner; ++j) dst[j] += g[base + j];
        }
      }
    }
  });
  return result;
}

template <typename T>
Array<T> add(const Array<T>& a, const Array<T>& b) {
  return elementwise(BinaryOp::kAdd, a, b);
}
template <typename T>
Array<T> sub(const Array<T>& a, const Array<T>& b) {
  return elementwise(BinaryOp::kSub, a, b);
}
template <typename T>
Array<T> mul(const Array<T>& a, const Array<T>& b) {
  return elementwise(BinaryOp::kMul, a, b);
}

template <typename T>
Array<T> elementwise(UnaryOp op, const Array<T>& a) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  switch (op) {
    case UnaryOp::kSigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_sigmoid(x[i]);
      break;
    case UnaryOp::kTanh:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
      break;
    case UnaryOp::kRelu:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
      break;
    case UnaryOp::kExp:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
      break;
  }
  Array<T> result(a.shape(), std::move(out));
  // Sigmoid, tanh and exp differentiate from their output; relu from its input.
  const Array<T> saved = op == UnaryOp::kRelu ? a : result.detach();
  detail::record<T>(result, {&a}, [op, saved](std::span<const T> g, std::span<std::vector<T>*> gin) {
    auto& ga = *gin[0];
    const auto s = saved.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      T d{};
      switch (op) {
        case UnaryOp::kSigmoid: d = s[i] * (T{1} - s[i]); break;
        case UnaryOp::kTanh: d = T{1} - s[i] * s[i]; break;
        case UnaryOp::kRelu: d = s[i] > T{0} ? T{1} : T{0}; break;
        case UnaryOp::kExp: d = s[i]; break;
      }
      ga[i] += g[i] * d;
    }
  });
  return result;
}

template <typename T>
Array<T> sigmoid(const Array<T>& a) {
  return elementwise(UnaryOp::kSigmoid, a);
}
template <typename T>
Array<T> tanh(const Array<T>& a) {
  return elementwise(UnaryOp::kTanh, a);
}
template <typename T>
Array<T> relu(const Array<T>& a) {
  return elementwise(UnaryOp::kRelu, a);
}
template <typename T>
Array<T> exp(const Array<T>& a) {
  return elementwise(UnaryOp::kExp, a);
}

template <typename T>
Array<T> scale(const Array<T>& a, T factor) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  Array<T> result(a.shape(), std::move(out));
  detail::record<T>(result, {&a}, [factor](std::span<const T> g, std::span<std::vector<T>*> gin) {
    auto& ga = *gin[0];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return result;
}

template <typename T>
Array<T> clamp(const Array<T>& a, T lo, T hi) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i], lo, hi);
  Array<T> result(a.shape(), std::move(out));
  detail::record<T>(result, {&a}, [a, lo, hi](std::span<const T> g, std::span<std::vector<T>*> gin) {
    auto& ga = *gin[0];
    const auto v = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (v[i] > lo && v[i] < hi) ga[i] += g[i];
    }
  });
  return result;
}

template <typename T>
Array<T> sum(const Array<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += static_cast<double>(v);
  Array<T> result(Shape{1}, std::vector<T>{static_cast<T>(acc)});
  detail::record<T>(result, {&a}, [](std::span<const T> g, std::span<std::vector<T>*> gin) {
    for (auto& v : *gin[0]) v += g[0];
  });
  return result;
}

template <typename T>
Array<T> add_n(std::span<const Array<T>> terms) {
  if (terms.empty()) throw ContractError("add_n of zero terms");
  const Shape& shape = terms[0].shape();
  for (const auto& t : terms) {
    if (t.shape() != shape) {
      throw ShapeError("add_n: " + to_string(t.shape()) + " vs " + to_string(shape));
    }
  }
  std::vector<T> out(terms[0].data().begin(), terms[0].data().end());
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const auto v = terms[k].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  Array<T> result(shape, std::move(out));
  std::vector<const Array<T>*> inputs;
  for (const auto& t : terms) inputs.push_back(&t);
  detail::record<T>(result, inputs, [](std::span<const T> g, std::span<std::vector<T>*> gin) {
    for (auto* gi : gin) {
      if (!gi) continue;
      for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
    }
  });
  return result;
}

template <typename T>
Array<T> reshape(const Array<T>& a, Shape shape) {
  Array<T> result = a.with_shape(std::move(shape));
  detail::record<T>(result, {&a}, [](std::span<const T> g, std::span<std::vector<T>*> gin) {
    auto& ga = *gin[0];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return result;
}

template <typename T>
Array<T> concat_last(std::span<const Array<T>> parts) {
  if (parts.empty()) throw ContractError("concat_last of zero parts");
  Shape lead = parts[0].shape();
  if (lead.empty()) throw ShapeError("concat_last on rank-0 array");
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    if (l.empty()) throw ShapeError("concat_last on rank-0 array");
    const std::size_t w = l.back();
    l.pop_back();
    if (l != lead) {
      throw ShapeError("concat_last: " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
    }
    widths.push_back(w);
    total += w;
  }
  const std::size_t rows = numel(lead);
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].data();
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(r * w),
                v.begin() + static_cast<std::ptrdiff_t>((r + 1) * w),
                out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += w;
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Array<T> result(out_shape, std::move(out));
  std::vector<const Array<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  detail::record<T>(result, inputs,
                    [widths, rows, total](std::span<const T> g, std::span<std::vector<T>*> gin) {
                      std::size_t off = 0;
                      for (std::size_t k = 0; k < gin.size(); ++k) {
                        const std::size_t w = widths[k];
                        if (auto* gk = gin[k]) {
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < w; ++c) {
                              (*gk)[r * w + c] += g[r * total + off + c];
                            }
                          }
                        }
                        off += w;
                      }
                    });
  return result;
}

template <typename T>
Array<T> slice_last(const Array<T>& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin >= end || end > a.shape().back()) {
    throw ShapeError("slice_last [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + to_string(a.shape()));
  }
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.size() / width;
  const std::size_t w = end - begin;
  const auto v = a.data();
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = v[r * width + begin + c];
  }
  Shape shape = a.shape();
  shape.back() = w;
  Array<T> result(shape, std::move(out));
  detail::record<T>(result, {&a},
                    [rows, w, width, begin](std::span<const T> g, std::span<std::vector<T>*> gin) {
                      auto& ga = *gin[0];
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < w; ++c) ga[r * width + begin + c] += g[r * w + c];
                      }
                    });
  return result;
}

#define EGQN_INSTANTIATE(T)                                                          \
  template Array<T> elementwise(BinaryOp, const Array<T>&, const Array<T>&);         \
  template Array<T> elementwise(UnaryOp, const Array<T>&);                           \
  template Array<T> add(const Array<T>&, const Array<T>&);                           \
  template Array<T> sub(const Array<T>&, const Array<T>&);                           \
  template Array<T> mul(const Array<T>&, const Array<T>&);                           \
  template Array<T> sigmoid(const Array<T>&);                                        \
  template Array<T> tanh(const Array<T>&);                                           \
  template Array<T> relu(const Array<T>&);                                           \
  template Array<T> exp(const Array<T>&);                                            \
  template Array<T> scale(const Array<T>&, T);                                       \
  template Array<T> clamp(const Array<T>&, T, T);                                    \
  template Array<T> sum(const Array<T>&);                                            \
  template Array<T> add_n(std::span<const Array<T>>);                                \
  template Array<T> reshape(const Array<T>&, Shape);                                 \
  template Array<T> concat_last(std::span<const Array<T>>);                          \
  template Array<T> slice_last(const Array<T>&, std::size_t, std::size_t);

EGQN_INSTANTIATE(float)
EGQN_INSTANTIATE(double)
#undef EGQN_INSTANTIATE

}  // namespace egqn::ad
